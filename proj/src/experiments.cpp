#include "conewave/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "conewave/bilinear.hpp"

namespace conewave {

namespace {

std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_ll(const std::string& s, long long& v)
{
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == s.size();
}

bool parse_d(const std::string& s, double& v)
{
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == s.size() && std::isfinite(v);
}

bool parse_b(const std::string& s, bool& v)
{
    if (s == "true" || s == "yes" || s == "1") {
        v = true;
        return true;
    }
    if (s == "false" || s == "no" || s == "0") {
        v = false;
        return true;
    }
    return false;
}

void check_value(ValueType type, const std::string& raw, const std::string& where)
{
    long long i = 0;
    double d = 0.0;
    bool b = false;
    switch (type) {
    case ValueType::Int:
        if (!parse_ll(raw, i)) fail(ErrorKind::Config, where + ": expected an integer, got '" + raw + "'");
        break;
    case ValueType::Double:
        if (!parse_d(raw, d)) fail(ErrorKind::Config, where + ": expected a number, got '" + raw + "'");
        break;
    case ValueType::Bool:
        if (!parse_b(raw, b)) fail(ErrorKind::Config, where + ": expected true or false, got '" + raw + "'");
        break;
    case ValueType::String:
        if (raw.empty()) fail(ErrorKind::Config, where + ": empty value");
        break;
    case ValueType::IntList:
        try {
            parse_int_list(raw);
        } catch (const Error& e) {
            fail(ErrorKind::Config, where + ": " + e.detail());
        }
        break;
    case ValueType::DoubleList:
        try {
            parse_double_list(raw);
        } catch (const Error& e) {
            fail(ErrorKind::Config, where + ": " + e.detail());
        }
        break;
    }
}

// TOML habits: "quoted" strings and [bracketed] lists are accepted as is.
std::string unwrap(std::string v)
{
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '[' && v.back() == ']')))
        v = trim(v.substr(1, v.size() - 2));
    return v;
}

std::string display(const std::string& section, const std::string& key)
{
    return section.empty() ? key : section + "." + key;
}

}  // namespace

const std::map<std::string, std::map<std::string, ValueType>>& config_schema()
{
    using V = ValueType;
    static const std::map<std::string, std::map<std::string, ValueType>> schema{
        {"", {{"seed", V::Int}, {"threads", V::Int}, {"quad_res", V::Double}, {"csv", V::String}, {"json", V::String}}},
        {"domain", {{"n", V::Int}, {"period", V::Double}, {"grid_points", V::Int}}},
        {"family",
         {{"count", V::Int},
          {"atoms", V::Int},
          {"k", V::Int},
          {"hilbert_dim", V::Int},
          {"color", V::String},
          {"inner", V::Double},
          {"outer", V::Double},
          {"max_angle", V::Double},
          {"margin", V::Double},
          {"dispersion", V::Double},
          {"energy", V::Double}}},
        {"localize",
         {{"r", V::DoubleList}, {"R", V::DoubleList}, {"inflation", V::Double}, {"C0", V::Double}, {"N", V::Double}}},
        {"packets", {{"c", V::DoubleList}, {"R", V::DoubleList}, {"out", V::String}, {"rotations", V::Int}}},
        {"bilinear", {{"experiment", V::String}}},
        {"bilinear.mock",
         {{"r", V::DoubleList},
          {"trials", V::Int},
          {"grid", V::Int},
          {"psi_k", V::Int},
          {"period", V::Double},
          {"window", V::Double},
          {"local_C", V::Double}}},
        {"bilinear.bluecone", {{"R", V::DoubleList}}},
        {"bilinear.doublecone", {{"r", V::DoubleList}, {"Q", V::Double}}},
        {"bilinear.kscaling",
         {{"k", V::IntList},
          {"p", V::DoubleList},
          {"period", V::Double},
          {"grid", V::Int},
          {"spacing", V::Double},
          {"psi_side", V::Double},
          {"phi_width", V::Double},
          {"pad", V::Double}}},
        {"bilinear.aratio", {{"Q", V::Double}, {"p", V::Double}, {"margin", V::Double}}},
        {"nullform",
         {{"l", V::IntList},
          {"k", V::IntList},
          {"p", V::Double},
          {"beta", V::Double},
          {"period", V::Double},
          {"time_factor", V::Double},
          {"samples", V::Double},
          {"epsilon", V::Double}}},
        {"accept", {{"criteria", V::IntList}}},
    };
    return schema;
}

std::vector<long long> parse_int_list(const std::string& raw)
{
    const std::string s = trim(raw);
    if (s.empty()) fail(ErrorKind::Config, "empty sweep grid");
    std::vector<long long> out;
    for (const std::string& part : split_commas(s)) {
        const auto dots = part.find("..");
        if (dots != std::string::npos) {
            long long a = 0, b = 0;
            if (!parse_ll(trim(part.substr(0, dots)), a) || !parse_ll(trim(part.substr(dots + 2)), b))
                fail(ErrorKind::Config, "malformed range '" + part + "'");
            if (b < a) fail(ErrorKind::Config, "empty range '" + part + "'");
            if (b - a > 100000) fail(ErrorKind::Config, "range '" + part + "' too long");
            for (long long v = a; v <= b; ++v) out.push_back(v);
        } else {
            long long v = 0;
            if (!parse_ll(part, v)) fail(ErrorKind::Config, "expected an integer, got '" + part + "'");
            out.push_back(v);
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& raw)
{
    const std::string s = trim(raw);
    if (s.empty()) fail(ErrorKind::Config, "empty sweep grid");
    std::vector<double> out;
    for (const std::string& part : split_commas(s)) {
        if (part.find("..") != std::string::npos) {
            for (long long v : parse_int_list(part)) out.push_back(static_cast<double>(v));
            continue;
        }
        double v = 0.0;
        if (!parse_d(part, v)) fail(ErrorKind::Config, "expected a number, got '" + part + "'");
        out.push_back(v);
    }
    return out;
}

Config Config::parse(const std::string& text, const std::string& source)
{
    Config c;
    c.source_ = source;
    const auto& schema = config_schema();
    std::istringstream in(text);
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string at = source + ":" + std::to_string(number);
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorKind::Config, at + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty() || !schema.count(section))
                fail(ErrorKind::Config, at + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorKind::Config, at + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unwrap(trim(line.substr(eq + 1)));
        const auto& keys = schema.at(section);
        const auto it = keys.find(key);
        if (it == keys.end())
            fail(ErrorKind::Config, at + ": unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
        check_value(it->second, value, at + ": " + display(section, key));
        if (c.values_[section].count(key))
            fail(ErrorKind::Config, at + ": duplicate key '" + display(section, key) + "'");
        c.values_[section][key] = ConfigValue{value, number};
    }
    return c;
}

Config Config::load(const std::string& path)
{
    std::ifstream f(path);
    if (!f) fail(ErrorKind::Config, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void Config::set(const std::string& section, const std::string& key, const std::string& raw)
{
    const auto& schema = config_schema();
    const auto s = schema.find(section);
    if (s == schema.end()) fail(ErrorKind::Config, "unknown section [" + section + "]");
    const auto k = s->second.find(key);
    if (k == s->second.end()) fail(ErrorKind::Config, "unknown key '" + display(section, key) + "'");
    const std::string v = unwrap(trim(raw));
    check_value(k->second, v, "option " + display(section, key));
    values_[section][key] = ConfigValue{v, 0};
}

const ConfigValue* Config::find(const std::string& section, const std::string& key) const
{
    const auto s = values_.find(section);
    if (s == values_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

std::string Config::where(const std::string& section, const std::string& key) const
{
    const ConfigValue* v = find(section, key);
    if (v && v->line > 0) return source_ + ":" + std::to_string(v->line) + ": " + display(section, key);
    return display(section, key);
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const
{
    const ConfigValue* v = find(section, key);
    long long out = fallback;
    if (v && !parse_ll(v->raw, out)) fail(ErrorKind::Config, where(section, key) + ": expected an integer");
    return out;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const
{
    const ConfigValue* v = find(section, key);
    double out = fallback;
    if (v && !parse_d(v->raw, out)) fail(ErrorKind::Config, where(section, key) + ": expected a number");
    return out;
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const
{
    const ConfigValue* v = find(section, key);
    return v ? v->raw : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const
{
    const ConfigValue* v = find(section, key);
    bool out = fallback;
    if (v && !parse_b(v->raw, out)) fail(ErrorKind::Config, where(section, key) + ": expected true or false");
    return out;
}

std::vector<long long> Config::get_int_list(const std::string& section, const std::string& key,
                                            std::vector<long long> fallback) const
{
    const ConfigValue* v = find(section, key);
    if (!v) return fallback;
    try {
        return parse_int_list(v->raw);
    } catch (const Error& e) {
        fail(ErrorKind::Config, where(section, key) + ": " + e.detail());
    }
}

std::vector<double> Config::get_double_list(const std::string& section, const std::string& key,
                                            std::vector<double> fallback) const
{
    const ConfigValue* v = find(section, key);
    if (!v) return fallback;
    try {
        return parse_double_list(v->raw);
    } catch (const Error& e) {
        fail(ErrorKind::Config, where(section, key) + ": " + e.detail());
    }
}

std::string Config::canonical() const
{
    std::string out;
    for (const auto& [section, keys] : values_)
        for (const auto& [key, v] : keys) {
            if (section.empty() && key == "threads") continue;  // never changes results
            out += display(section, key) + "=" + v.raw + "\n";
        }
    return out;
}

std::string Config::hash() const
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- random families

std::vector<Wave> random_wave_family(const FamilySpec& spec, std::uint64_t seed)
{
    spec.domain.validate();
    const int n = spec.domain.n;
    if (spec.count < 0 || spec.atoms < 1 || spec.hilbert_dim < 1)
        fail(ErrorKind::InvalidArgument, "family needs count >= 0, atoms >= 1, hilbert_dim >= 1");
    if (!(spec.inner >= 1.0 && spec.outer <= 2.0 && spec.inner < spec.outer))
        fail(ErrorKind::InfeasibleSpec, "radial range must sit inside [1, 2]");
    if (!(spec.max_angle > 0.0 && spec.max_angle <= kPi / 8 + 1e-15))
        fail(ErrorKind::InfeasibleSpec, "angular range must sit inside the pi/8 sector");
    if (spec.min_margin >= 0.5) fail(ErrorKind::InfeasibleSpec, "margin target above what the band allows");
    const double scale = std::ldexp(1.0, spec.k);
    const double L = spec.domain.period;
    // lattice directions at radius 2^k inner are about 1 / (2^k inner L) apart
    const double resolution = 1.0 / (scale * spec.inner * L);
    if (spec.dispersion > 0.0) {
        if (spec.dispersion < 2.0 * resolution)
            fail(ErrorKind::InfeasibleSpec, "dispersion target below the lattice angular resolution");
        if (spec.dispersion > 2.0 * spec.max_angle)
            fail(ErrorKind::InfeasibleSpec, "dispersion target wider than the sector");
    }
    if ((spec.outer - spec.inner) * scale * L < 1.0)
        fail(ErrorKind::InfeasibleSpec, "radial range holds no lattice shell");

    std::vector<Wave> out;
    for (int w = 0; w < spec.count; ++w) {
        std::mt19937_64 rng(cell_seed(seed, "family:" + spec.name, static_cast<std::uint64_t>(w)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::normal_distribution<double> g;
        std::vector<double> axis(static_cast<std::size_t>(n), 0.0);
        axis[0] = 1.0;
        const double half = spec.dispersion > 0.0 ? 0.5 * spec.dispersion : 0.0;
        if (half > 0.0) {
            // random axis far enough inside the sector for the whole cap
            const double room = spec.max_angle - half;
            for (int tries = 0;; ++tries) {
                if (tries > 10000) fail(ErrorKind::InfeasibleSpec, "no room for the dispersion cap");
                std::vector<double> v(static_cast<std::size_t>(n), 0.0);
                v[0] = 1.0;
                for (int d = 1; d < n; ++d) v[d] = std::tan(room) * u(rng);
                const double r = norm2(v);
                for (double& x : v) x /= r;
                if (angle_to_e1(v) <= room) {
                    axis = v;
                    break;
                }
            }
        }
        const double spread = half > 0.0 ? half : spec.max_angle;
        AtomAccumulator acc(spec.domain, spec.hilbert_dim);
        std::vector<Complex> amp(static_cast<std::size_t>(spec.hilbert_dim));
        std::vector<double> xi(static_cast<std::size_t>(n)), dir(static_cast<std::size_t>(n));
        int accepted = 0;
        long tries = 0;
        const long max_tries = 2000L * spec.atoms + 100000L;
        while (accepted < spec.atoms) {
            if (++tries > max_tries) fail(ErrorKind::InfeasibleSpec, "family constraints reject every lattice atom");
            // direction: axis plus a transverse offset of angle below `spread`
            for (int d = 0; d < n; ++d) dir[d] = axis[d];
            std::vector<double> off(static_cast<std::size_t>(n));
            for (int d = 0; d < n; ++d) off[d] = u(rng);
            const double along = dot(off, axis);
            for (int d = 0; d < n; ++d) off[d] -= along * axis[d];
            const double on = norm2(off);
            if (on == 0.0) continue;
            const double ang = spread * std::pow(std::abs(u(rng)), 1.0 / std::max(1, n - 1));
            for (int d = 0; d < n; ++d) dir[d] = std::cos(ang) * axis[d] + std::sin(ang) * off[d] / on;
            const double rho = scale * (spec.inner + (spec.outer - spec.inner) * 0.5 * (u(rng) + 1.0));
            for (int d = 0; d < n; ++d) xi[d] = std::round(rho * dir[d] * L) / L;
            const double r = norm2(xi) / scale;
            if (r < spec.inner || r > spec.outer) continue;
            if (angle_to_e1(xi) > spec.max_angle) continue;
            if (half > 0.0) {
                const double c = std::clamp(dot(xi, axis) / norm2(xi), -1.0, 1.0);
                if (std::acos(c) > half) continue;
            }
            if (!in_sector(xi, spec.k)) continue;
            if (atom_margin(xi, spec.k) < spec.min_margin) continue;
            for (auto& a : amp) a = Complex(g(rng), g(rng));
            acc.add(xi, amp);
            ++accepted;
        }
        Wave wave = acc.build(spec.color, spec.k);
        if (spec.energy > 0.0) wave = normalized(wave, spec.energy);
        out.push_back(std::move(wave));
    }
    return out;
}

// ---- rows

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    std::vector<std::string> names;
    for (const ResultRow& r : rows)
        for (const auto& [k, v] : r.params)
            if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
    out << "experiment";
    for (const auto& k : names) out << ',' << k;
    out << ",value,err_est,seed\n";
    for (const ResultRow& r : rows) {
        out << r.experiment;
        for (const auto& k : names) {
            out << ',';
            for (const auto& [pk, pv] : r.params)
                if (pk == k) {
                    out << pv;
                    break;
                }
        }
        out << ',' << format_number(r.value) << ',' << format_number(r.err_est) << ',' << r.seed << '\n';
    }
}

nlohmann::json rows_to_json(const std::vector<ResultRow>& rows)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const ResultRow& r : rows) {
        nlohmann::json p = nlohmann::json::object();
        for (const auto& [k, v] : r.params) p[k] = v;
        arr.push_back({{"experiment", r.experiment}, {"params", p}, {"value", r.value}, {"err_est", r.err_est}, {"seed", r.seed}});
    }
    return arr;
}

}  // namespace conewave
