#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "conewave/bilinear.hpp"
#include "conewave/experiments.hpp"
#include "conewave/localization.hpp"
#include "conewave/nullform.hpp"
#include "conewave/packets.hpp"

using namespace conewave;
using nlohmann::json;

namespace {

struct Run {
    Config cfg;
    std::string command;
    std::vector<ResultRow> rows;
    json extra = json::object();

    std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.get_int("", "seed", 1)); }
    double quad(double fallback) const { return cfg.get_double("", "quad_res", fallback); }
    void add(std::string experiment, std::vector<std::pair<std::string, std::string>> params, double value,
             double err = 0.0)
    {
        rows.push_back(ResultRow{std::move(experiment), std::move(params), value, err, seed()});
    }
};

std::string num(double v) { return format_number(v); }

json read_json(const std::string& path)
{
    std::ifstream f(path);
    if (!f) fail(ErrorKind::Config, "cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j)
{
    std::ofstream f(path);
    if (!f) fail(ErrorKind::Config, "cannot write '" + path + "'");
    f << j.dump(2) << '\n';
}

// "x=1,2,t=0,r=8": a token without '=' continues the previous key.
std::map<std::string, std::vector<double>> parse_spec(const std::string& text, const std::string& what)
{
    std::map<std::string, std::vector<double>> out;
    std::string key;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto eq = tok.find('=');
        std::string val = tok;
        if (eq != std::string::npos) {
            key = tok.substr(0, eq);
            val = tok.substr(eq + 1);
            if (out.count(key)) fail(ErrorKind::Config, what + ": duplicate '" + key + "'");
            out[key];
        }
        if (key.empty()) fail(ErrorKind::Config, what + ": expected key=value, got '" + tok + "'");
        try {
            out[key].push_back(parse_double_list(val).at(0));
        } catch (const Error&) {
            fail(ErrorKind::Config, what + ": bad number '" + val + "' for " + key);
        }
    }
    return out;
}

std::vector<double> spec_get(std::map<std::string, std::vector<double>>& s, const std::string& key, std::size_t count,
                             const std::string& what)
{
    const auto it = s.find(key);
    if (it == s.end()) fail(ErrorKind::Config, what + ": missing '" + key + "'");
    if (it->second.size() != count)
        fail(ErrorKind::Config, what + ": '" + key + "' needs " + std::to_string(count) + " value(s)");
    return it->second;
}

TorusDomain domain_from(const Config& c)
{
    TorusDomain d;
    d.n = static_cast<int>(c.get_int("domain", "n", 2));
    d.period = c.get_double("domain", "period", 64.0);
    d.grid_points = static_cast<int>(c.get_int("domain", "grid_points", 128));
    try {
        d.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, "[domain]: " + e.detail());
    }
    return d;
}

FamilySpec family_from(const Config& c, const std::string& name, Color fallback)
{
    FamilySpec f;
    f.name = name;
    f.domain = domain_from(c);
    f.color = fallback;
    if (c.has("family", "color")) f.color = color_from_string(c.get_string("family", "color", "red"));
    f.k = static_cast<int>(c.get_int("family", "k", 0));
    f.count = static_cast<int>(c.get_int("family", "count", 10));
    f.atoms = static_cast<int>(c.get_int("family", "atoms", 20));
    f.hilbert_dim = static_cast<int>(c.get_int("family", "hilbert_dim", 1));
    // defaults keep clear of the band and sector edges so cutoffs and packets accept the waves
    f.inner = c.get_double("family", "inner", 1.3);
    f.outer = c.get_double("family", "outer", 1.7);
    f.max_angle = c.get_double("family", "max_angle", kPi / 16);
    f.min_margin = c.get_double("family", "margin", 0.0);
    f.dispersion = c.get_double("family", "dispersion", 0.0);
    f.energy = c.get_double("family", "energy", 1.0);
    if (f.count < 1) fail(ErrorKind::Config, "family.count must be positive");
    return f;
}

std::vector<Wave> input_waves(const Run& run, const std::string& path)
{
    if (!path.empty()) return {wave_from_json(read_json(path))};
    return random_wave_family(family_from(run.cfg, "family", Color::Red), run.seed());
}

void localize(Run& run, const std::string& wave_path, const std::string& disk_text, const std::string& out,
              const std::string& report_path)
{
    const auto waves = input_waves(run, wave_path);
    const Config& c = run.cfg;
    LocalizationParams lp;
    lp.C0 = c.get_double("localize", "C0", lp.C0);
    lp.N = c.get_double("localize", "N", lp.N);
    CutoffOptions co;
    co.per_unit = run.quad(co.per_unit);

    std::vector<Disk> disks;
    if (!disk_text.empty()) {
        auto s = parse_spec(disk_text, "--disk");
        const int n = waves[0].n();
        disks.push_back(Disk{spec_get(s, "x", n, "--disk"), s.count("t") ? spec_get(s, "t", 1, "--disk")[0] : 0.0,
                             spec_get(s, "r", 1, "--disk")[0]});
    } else {
        for (double r : c.get_double_list("localize", "r", {16.0, 32.0}))
            disks.push_back(Disk{std::vector<double>(waves[0].n(), 0.0), 0.0, r});
    }
    const std::vector<double> Rs = c.get_double_list("localize", "R", {});
    HuygensOptions ho;
    ho.inflation = c.get_double("localize", "inflation", ho.inflation);
    ho.per_unit = run.quad(ho.per_unit);

    std::vector<Wave> blues;
    if (!Rs.empty()) {
        FamilySpec bf = family_from(c, "localize-blue", Color::Blue);
        bf.color = opposite(waves[0].color());
        bf.count = static_cast<int>(waves.size());
        bf.k = waves[0].k() + 1;
        bf.domain = waves[0].domain();
        blues = random_wave_family(bf, run.seed());
    }

    json reports = json::array();
    for (std::size_t w = 0; w < waves.size(); ++w)
        for (const Disk& D : disks) {
            const CutoffReport rep = cutoff_report(waves[w], D, co);
            std::vector<std::pair<std::string, std::string>> p{
                {"wave", std::to_string(w)}, {"r", num(D.radius)}, {"t", num(D.t)}};
            for (const auto& [name, v] : std::vector<std::pair<std::string, double>>{
                     {"local_slack", rep.local_slack},
                     {"nonlocal_slack", rep.nonlocal_slack},
                     {"concentration", rep.concentration},
                     {"vanishing", rep.vanishing},
                     {"energy_minor", rep.energy_minor ? 1.0 : 0.0}}) {
                auto q = p;
                q.emplace_back("quantity", name);
                run.add("localize", q, v);
            }
            json j = rep;
            j["wave"] = w;
            j["disk"] = {{"x", D.center}, {"t", D.t}, {"r", D.radius}};
            reports.push_back(j);
            for (double R : Rs) {
                const HuygensReport h = huygens_report(waves[w], blues[w], D, R, ho);
                auto q = p;
                q.emplace_back("R", num(R));
                q.emplace_back("inflation", num(ho.inflation));
                for (const auto& [name, v] : std::vector<std::pair<std::string, double>>{
                         {"finite_propagation", h.finite_propagation}, {"huygens", h.huygens}, {"red_blue", h.red_blue}}) {
                    auto qq = q;
                    qq.emplace_back("quantity", name);
                    run.add("huygens", qq, v, h.error_estimate);
                }
            }
        }
    if (!out.empty()) {
        if (waves.size() != 1 || disks.size() != 1) fail(ErrorKind::Config, "--out needs one wave and one disk");
        write_json(out, json(project_disk(waves[0], disks[0], lp)));
    }
    if (!report_path.empty()) write_json(report_path, reports);
}

void packets(Run& run, const std::string& wave_path, const std::string& cube_text, std::vector<double> cs,
             const std::string& out_dir)
{
    const Config& c = run.cfg;
    const Wave phi = input_waves(run, wave_path)[0];
    if (cs.empty()) cs = c.get_double_list("packets", "c", {0.1});
    std::vector<Cube> cubes;
    if (!cube_text.empty()) {
        auto s = parse_spec(cube_text, "--cube");
        cubes.push_back(Cube{spec_get(s, "x", phi.n(), "--cube"), s.count("t") ? spec_get(s, "t", 1, "--cube")[0] : 0.0,
                             spec_get(s, "side", 1, "--cube")[0]});
    } else {
        for (double R : c.get_double_list("packets", "R", {16.0}))
            cubes.push_back(Cube{std::vector<double>(phi.n(), 0.0), 0.0, R});
    }
    PacketOptions po;
    po.rotations = static_cast<int>(c.get_int("packets", "rotations", po.rotations));
    std::string dir = out_dir.empty() ? c.get_string("packets", "out", "") : out_dir;

    const double E = energy(phi);
    json index = json::array();
    for (double cc : cs)
        for (const Cube& Q : cubes) {
            const PacketDecomposition D = tube_decompose(phi, Q, cc, po);
            const double residual = reconstruction_residual(D);
            Assignment m{D.size(), 4, std::vector<double>(D.size() * 4)};
            std::mt19937_64 rng(cell_seed(run.seed(), "packets-bessel", index.size()));
            std::exponential_distribution<double> ex;
            for (std::size_t t = 0; t < D.size(); ++t) {
                double s = 0.0;
                for (std::size_t q = 0; q < 4; ++q) s += m.weight[t * 4 + q] = ex(rng);
                for (std::size_t q = 0; q < 4; ++q) m.weight[t * 4 + q] /= s;
            }
            const double bessel = bessel_check(D, m);
            std::vector<std::pair<std::string, std::string>> p{{"c", num(cc)}, {"R", num(Q.side)}, {"t", num(Q.t)}};
            for (const auto& [name, v] : std::vector<std::pair<std::string, double>>{
                     {"reconstruction_residual", residual},
                     {"bessel_ratio", bessel},
                     {"dispersion_constant", D.dispersion_constant()},
                     {"min_packet_margin", D.min_packet_margin()}}) {
                auto q = p;
                q.emplace_back("quantity", name);
                run.add("packets", q, v);
            }
            json entry{{"c", cc},
                       {"cube", {{"x", Q.center}, {"t", Q.t}, {"side", Q.side}}},
                       {"tubes", D.size()},
                       {"r", D.r()},
                       {"spacing", D.spacing()},
                       {"reconstruction_residual", residual},
                       {"bessel_ratio", bessel},
                       {"dispersion_constant", D.dispersion_constant()},
                       {"min_packet_margin", D.min_packet_margin()}};
            if (!dir.empty()) {
                std::filesystem::create_directories(dir);
                const std::string stem = "c" + num(cc) + "_R" + num(Q.side);
                const auto energies = D.packet_energies();
                json files = json::array();
                for (std::size_t t = 0; t < D.size(); ++t) {
                    if (energies[t] < 1e-6 * E) continue;
                    const std::string name = stem + "_tube" + std::to_string(t) + ".json";
                    json tj{{"tube", t}, {"direction", D.direction_index(t)}, {"base", D.base(t)},
                            {"energy", energies[t]}, {"packet", D.packet(t)}};
                    write_json(dir + "/" + name, tj);
                    files.push_back(name);
                }
                entry["files"] = files;
            }
            index.push_back(entry);
        }
    if (!dir.empty()) write_json(dir + "/index.json", json{{"config_hash", run.cfg.hash()}, {"entries", index}});
    run.extra["packets"] = index;
}

void bilinear(Run& run, std::string experiment)
{
    const Config& c = run.cfg;
    if (experiment.empty()) experiment = c.get_string("bilinear", "experiment", "");
    if (experiment == "mock") {
        MockOptions o;
        o.seed = run.seed();
        o.period = c.get_double("bilinear.mock", "period", o.period);
        o.grid = static_cast<int>(c.get_int("bilinear.mock", "grid", o.grid));
        o.trials = static_cast<int>(c.get_int("bilinear.mock", "trials", o.trials));
        o.psi_k = static_cast<int>(c.get_int("bilinear.mock", "psi_k", o.psi_k));
        o.window = c.get_double("bilinear.mock", "window", o.window);
        o.local_C = c.get_double("bilinear.mock", "local_C", o.local_C);
        const auto rs = c.get_double_list("bilinear.mock", "r", {4.0, 8.0, 16.0, 32.0});
        const MockReport rep = low_dispersion_l2_check(rs, o);
        for (const MockRow& m : rep.rows) {
            const std::vector<std::pair<std::string, std::string>> p{
                {"r", num(m.r)}, {"trials", std::to_string(o.trials)}, {"period", num(o.period)}, {"grid", std::to_string(o.grid)}};
            auto q = p;
            q.emplace_back("quantity", "max_ratio");
            run.add("mock", q, m.max_ratio);
            q.back().second = "mean_ratio";
            run.add("mock", q, m.mean_ratio);
            q.back().second = "local_ratio";
            run.add("mock", q, m.local_ratio);
            q.back().second = "oracle_times_r";
            run.add("mock", q, surface_convolution_oracle(m.r) * m.r);
        }
        run.add("mock", {{"quantity", "slope"}}, rep.fit.slope, rep.fit.residual);
        run.add("mock", {{"quantity", "single_atom_ratio"}}, rep.single_atom_ratio);
    } else if (experiment == "bluecone") {
        const auto waves = random_wave_family(family_from(c, "family", Color::Red), run.seed());
        const auto Rs = c.get_double_list("bilinear.bluecone", "R", {8.0, 16.0, 32.0});
        const std::vector<double> v(waves[0].n(), 0.0);
        for (std::size_t w = 0; w < waves.size(); ++w) {
            const ConeEnergyReport rep = cone_energy_check(waves[w], v, 1.0, Rs, run.quad(1.0));
            for (std::size_t i = 0; i < Rs.size(); ++i)
                run.add("bluecone", {{"wave", std::to_string(w)}, {"R", num(Rs[i])}, {"quantity", "norm"}}, rep.norms[i]);
            run.add("bluecone", {{"wave", std::to_string(w)}, {"quantity", "slope"}}, rep.fit.slope, rep.fit.residual);
        }
    } else if (experiment == "doublecone") {
        FamilySpec f = family_from(c, "family", Color::Red);
        const auto phis = random_wave_family(f, run.seed());
        f.name = "family-blue";
        f.color = opposite(f.color);
        const auto psis = random_wave_family(f, run.seed());
        const double side = c.get_double("bilinear.doublecone", "Q", 32.0);
        const auto rs = c.get_double_list("bilinear.doublecone", "r", {1.0, 2.0, 4.0});
        const std::vector<double> v(f.domain.n, 0.0);
        const Cube Q{v, 0.0, side};
        for (std::size_t w = 0; w < phis.size(); ++w)
            for (double r : rs) {
                const DoubleConeReport rep = doublecone_l1_check(phis[w], psis[w], v, 0.0, r, Q, run.quad(2.0));
                run.add("doublecone", {{"wave", std::to_string(w)}, {"r", num(r)}, {"Q", num(side)}}, rep.ratio,
                        rep.norm.error_estimate);
            }
    } else if (experiment == "kscaling") {
        KScalingOptions o;
        o.period = c.get_double("bilinear.kscaling", "period", o.period);
        o.grid = static_cast<int>(c.get_int("bilinear.kscaling", "grid", o.grid));
        o.spacing = c.get_double("bilinear.kscaling", "spacing", o.spacing);
        o.psi_side = c.get_double("bilinear.kscaling", "psi_side", o.psi_side);
        o.phi_width = c.get_double("bilinear.kscaling", "phi_width", o.phi_width);
        o.pad = c.get_double("bilinear.kscaling", "pad", o.pad);
        o.per_unit = run.quad(o.per_unit);
        std::vector<int> ks;
        for (long long k : c.get_int_list("bilinear.kscaling", "k", {0, 1, 2, 3, 4})) ks.push_back(static_cast<int>(k));
        for (double p : c.get_double_list("bilinear.kscaling", "p", {5.0 / 3.0, 2.0})) {
            const KScalingReport rep = k_scaling_experiment(ks, p, o);
            for (std::size_t i = 0; i < ks.size(); ++i)
                run.add("kscaling", {{"p", num(p)}, {"k", std::to_string(ks[i])}, {"quantity", "ratio"}}, rep.ratios[i],
                        rep.errors[i]);
            run.add("kscaling", {{"p", num(p)}, {"quantity", "slope"}}, rep.fit.slope, rep.fit.residual);
        }
    } else if (experiment == "aratio") {
        FamilySpec f = family_from(c, "family", Color::Red);
        const auto phis = random_wave_family(f, run.seed());
        f.name = "family-blue";
        f.color = opposite(f.color);
        const auto psis = random_wave_family(f, run.seed());
        std::vector<std::pair<Wave, Wave>> pairs;
        for (std::size_t i = 0; i < phis.size(); ++i) pairs.emplace_back(phis[i], psis[i]);
        const double side = c.get_double("bilinear.aratio", "Q", 16.0);
        const double p = c.get_double("bilinear.aratio", "p", 5.0 / 3.0);
        const Cube Q{std::vector<double>(f.domain.n, 0.0), 0.0, side};
        const ARatioReport rep =
            empirical_A_ratio(pairs, Q, p, run.quad(2.0), c.get_double("bilinear.aratio", "margin", 0.01));
        for (std::size_t i = 0; i < rep.ratios.size(); ++i)
            run.add("aratio", {{"pair", std::to_string(i)}, {"Q", num(side)}, {"p", num(p)}}, rep.ratios[i]);
        run.add("aratio", {{"pair", "max"}, {"Q", num(side)}, {"p", num(p)}}, rep.value);
        run.extra["family_hash"] = rep.family_hash;
    } else {
        fail(ErrorKind::Config, "unknown experiment '" + experiment + "' (mock, bluecone, doublecone, kscaling, aratio)");
    }
}

void nullform(Run& run, const std::string& tuple_path, bool toy, const std::string& l_text, const std::string& k_text)
{
    const Config& c = run.cfg;
    if (!tuple_path.empty()) {
        const ExponentVerdict v = check_exponent_conditions(exponent_tuple_from_json(read_json(tuple_path)));
        run.extra["verdict"] = v;
        run.add("exponents", {{"file", tuple_path}}, v.admissible ? 1.0 : 0.0);
    }
    if (!toy) return;
    ToyOptions o;
    o.p = c.get_double("nullform", "p", o.p);
    o.beta = c.get_double("nullform", "beta", o.beta);
    o.period = c.get_double("nullform", "period", o.period);
    o.time_factor = c.get_double("nullform", "time_factor", o.time_factor);
    o.samples = c.get_double("nullform", "samples", o.samples);
    o.epsilon = c.get_double("nullform", "epsilon", o.epsilon);
    auto ints = [](const std::vector<long long>& v) { return std::vector<int>(v.begin(), v.end()); };
    const auto ls = ints(l_text.empty() ? c.get_int_list("nullform", "l", {0, 1, 2}) : parse_int_list(l_text));
    const auto ks = ints(k_text.empty() ? c.get_int_list("nullform", "k", {0, 1, 2}) : parse_int_list(k_text));
    for (const ToyCell& cell : toy_scan(ls, ks, o))
        run.add("toy", {{"l", std::to_string(cell.l)}, {"k", std::to_string(cell.k)}, {"p", num(o.p)}, {"beta", num(o.beta)}},
                cell.normalized, cell.error_estimate / cell.scale);
}

int accept(Run& run, const std::vector<int>& only)
{
    AcceptanceOptions o;
    o.seed = run.seed();
    o.only = only;
    if (o.only.empty())
        for (long long i : run.cfg.get_int_list("accept", "criteria", {})) o.only.push_back(static_cast<int>(i));
    int failed = 0;
    json verdicts = json::array();
    for (const CriterionResult& r : run_acceptance(o, [](const CriterionResult& r) {
             std::printf("%s\n", format_criterion(r).c_str());
             std::fflush(stdout);
         })) {
        failed += r.pass ? 0 : 1;
        verdicts.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"seconds", r.seconds}, {"detail", r.detail}});
        run.rows.insert(run.rows.end(), r.rows.begin(), r.rows.end());
    }
    run.extra["criteria"] = verdicts;
    std::printf("%d of %zu criteria failed\n", failed, verdicts.size());
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"conewave: wave packets, cutoffs and bilinear estimates on the torus"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    std::string config_path, csv_path, json_path;
    std::optional<long long> seed;
    std::optional<int> threads;
    std::optional<double> quad_res;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--quad-res", quad_res, "quadrature samples per unit length");
    app.add_option("--csv", csv_path, "write result rows as CSV (default: stdout)");
    app.add_option("--json", json_path, "write results and config hash as JSON");

    std::string wave_path, disk_text, out_path, report_path;
    auto* loc = app.add_subcommand("localize", "disk cutoff reports and Huygens ratios");
    loc->add_option("--wave", wave_path, "wave JSON (default: config family)");
    loc->add_option("--disk", disk_text, "x=..,t=..,r=..");
    loc->add_option("--out", out_path, "projected wave JSON");
    loc->add_option("--report", report_path, "cutoff report JSON");

    std::string cube_text, pk_out;
    std::vector<double> cs;
    auto* pk = app.add_subcommand("packets", "tube decomposition");
    pk->add_option("--wave", wave_path, "wave JSON (default: first config family wave)");
    pk->add_option("--cube", cube_text, "x=..,t=..,side=..");
    pk->add_option("--c", cs, "dyadic parameter c");
    pk->add_option("--out", pk_out, "directory for per-tube JSON and index.json");

    std::string experiment;
    auto* bl = app.add_subcommand("bilinear", "bilinear experiments");
    bl->add_option("--experiment", experiment, "mock|bluecone|doublecone|kscaling|aratio");

    std::string tuple_path, l_text, k_text;
    bool toy = false;
    auto* nf = app.add_subcommand("nullform", "exponent checker and sector bound scan");
    nf->add_option("--check-exponents", tuple_path, "exponent tuple JSON");
    nf->add_flag("--toy-scan", toy, "run the sector bound scan");
    nf->add_option("--l", l_text, "l values, e.g. 0..2");
    nf->add_option("--k", k_text, "k values, e.g. 0..2");

    std::vector<int> only;
    auto* ac = app.add_subcommand("accept", "acceptance suite");
    ac->add_option("--only", only, "criterion numbers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    Run run;
    int status = 0;
    try {
        if (!config_path.empty()) run.cfg = Config::load(config_path);
        if (seed) run.cfg.set("", "seed", std::to_string(*seed));
        if (threads) run.cfg.set("", "threads", std::to_string(*threads));
        if (quad_res) run.cfg.set("", "quad_res", format_number(*quad_res));
        if (csv_path.empty()) csv_path = run.cfg.get_string("", "csv", "");
        if (json_path.empty()) json_path = run.cfg.get_string("", "json", "");
        if (run.cfg.has("", "threads")) {
            const long long t = run.cfg.get_int("", "threads", 0);
            if (t < 1) fail(ErrorKind::Config, "threads must be positive");
            set_thread_count(static_cast<int>(t));
        }
        if (run.cfg.has("", "quad_res") && run.quad(1.0) <= 0.0) fail(ErrorKind::Config, "quad_res must be positive");

        if (*loc) {
            run.command = "localize";
            localize(run, wave_path, disk_text, out_path, report_path);
        } else if (*pk) {
            run.command = "packets";
            packets(run, wave_path, cube_text, cs, pk_out);
        } else if (*bl) {
            run.command = "bilinear";
            bilinear(run, experiment);
        } else if (*nf) {
            run.command = "nullform";
            if (tuple_path.empty() && !toy) fail(ErrorKind::Config, "nullform needs --check-exponents or --toy-scan");
            nullform(run, tuple_path, toy, l_text, k_text);
            if (run.extra.contains("verdict") && !toy && json_path.empty())
                std::cout << run.extra["verdict"].dump(2) << '\n';
        } else if (*ac) {
            run.command = "accept";
            status = accept(run, only);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "conewave: %s\n", e.what());
        return e.kind() == ErrorKind::Config ? 2 : 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "conewave: %s\n", e.what());
        return 3;
    }

    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) {
            std::fprintf(stderr, "conewave: cannot write '%s'\n", csv_path.c_str());
            return 2;
        }
        write_csv(f, run.rows);
    } else if (run.command != "accept" && !(run.command == "nullform" && !toy)) {
        write_csv(std::cout, run.rows);
    }
    if (!json_path.empty()) {
        json j{{"command", run.command},
               {"config_hash", run.cfg.hash()},
               {"config", run.cfg.canonical()},
               {"seed", run.seed()},
               {"rows", rows_to_json(run.rows)}};
        for (auto& [k, v] : run.extra.items()) j[k] = v;
        std::ofstream f(json_path);
        if (!f) {
            std::fprintf(stderr, "conewave: cannot write '%s'\n", json_path.c_str());
            return 2;
        }
        f << j.dump(2) << '\n';
    }
    return status;
}
