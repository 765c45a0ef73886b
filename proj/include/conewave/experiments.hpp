#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>

#include "json.hpp"

#include "conewave/wave.hpp"

namespace conewave {

// ---- configuration
//
// Flat text: "key = value" lines, "[section]" headers, '#' comments. Values
// are numbers, words, comma separated lists or integer ranges "a..b". Every
// section and key must be declared in the schema; anything else is a Config
// error naming the line and the field.

enum class ValueType { Int, Double, String, IntList, DoubleList, Bool };

struct ConfigValue {
    std::string raw;
    int line = 0;
};

class Config {
public:
    static Config parse(const std::string& text, const std::string& source = "<config>");
    static Config load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<long long> get_int_list(const std::string& section, const std::string& key,
                                        std::vector<long long> fallback) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) const;

    // Command-line overrides go through the same validation.
    void set(const std::string& section, const std::string& key, const std::string& raw);

    // Canonical "section.key=value" lines, sorted; the hash covers exactly this text.
    std::string canonical() const;
    std::string hash() const;

private:
    const ConfigValue* find(const std::string& section, const std::string& key) const;
    std::string where(const std::string& section, const std::string& key) const;
    std::string source_ = "<config>";
    std::map<std::string, std::map<std::string, ConfigValue>> values_;
};

// Declared sections and keys.
const std::map<std::string, std::map<std::string, ValueType>>& config_schema();

// "0..2" -> {0, 1, 2}; "1, 4" -> {1, 4}. Config error on malformed or empty input.
std::vector<long long> parse_int_list(const std::string& raw);
std::vector<double> parse_double_list(const std::string& raw);

// ---- random families

struct FamilySpec {
    std::string name = "family";
    TorusDomain domain;
    Color color = Color::Red;
    int k = 0;
    int count = 10;
    int atoms = 20;
    int hilbert_dim = 1;
    double inner = 1.0;          // radial range in units of 2^k
    double outer = 2.0;
    double max_angle = kPi / 8;  // sector half-width about e_1
    double min_margin = 0.0;
    double dispersion = 0.0;     // > 0: all directions within this diameter
    double energy = 1.0;         // <= 0 leaves the amplitudes unnormalised
};

// Rejection sampled atoms with standard complex Gaussian amplitudes; wave i
// draws from cell_seed(seed, "family:" + name, i). InfeasibleSpec when the
// constraints leave no room (dispersion below the lattice angular resolution,
// margin above what the band allows, too few lattice points).
std::vector<Wave> random_wave_family(const FamilySpec& spec, std::uint64_t seed);

// ---- result rows

struct ResultRow {
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> params;
    double value = 0.0;
    double err_est = 0.0;
    std::uint64_t seed = 0;
};

// %.17g, so reruns compare byte for byte.
std::string format_number(double v);

// Columns: experiment, union of parameter names in first-seen order, value, err_est, seed.
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::json rows_to_json(const std::vector<ResultRow>& rows);

// ---- acceptance suite

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
    std::vector<ResultRow> rows;
};

struct AcceptanceOptions {
    std::uint64_t seed = 1;
    std::vector<int> only;  // empty runs every criterion
};

inline constexpr int kCriteria = 10;

const char* criterion_name(int id);
CriterionResult run_criterion(int id, const AcceptanceOptions& options);
// Runs the selected criteria in order; `report` is called after each one.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options,
                                            const std::function<void(const CriterionResult&)>& report = {});
std::string format_criterion(const CriterionResult& r);

}  // namespace conewave
