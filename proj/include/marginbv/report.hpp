#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marginbv/decomp.hpp"
#include "marginbv/loss_zoo.hpp"

namespace marginbv {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct CheckResult {
    std::string suite;
    std::string name;
    // Which result of the theory the check exercises.
    std::string anchor;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

struct InapplicableNotice {
    std::string theorem_id;
    std::string reason;
};

struct Report {
    nlohmann::json command = nlohmann::json::object();
    nlohmann::json loss = nlohmann::json::object();
    std::vector<DecompositionReport> decompositions;
    std::vector<InapplicableNotice> inapplicable;
    std::vector<CheckResult> checks;
    std::vector<std::string> warnings;
    nlohmann::json summary = nlohmann::json::object();
    std::optional<nlohmann::json> timing;

    bool passed() const;
};

// Non-finite numbers are written as the strings "inf", "-inf" and "nan" so
// that every value survives a round trip.
nlohmann::json number_to_json(double x);
double number_from_json(const nlohmann::json& j);

nlohmann::json loss_echo(const LossDescriptor& loss);

nlohmann::json to_json(const DecompositionReport& rep);
DecompositionReport decomposition_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CheckResult& check);
CheckResult check_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

// Throws ConfigError describing the first schema violation.
void validate_report(const nlohmann::json& j);

std::string dump_report(const Report& report);

// Writes to a temporary file next to `path`, then renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);

// One row per decomposition component plus the residuals, and one per check.
std::string summary_table(const Report& report);

// Flat CSV of every per-point series in the report: point, theorem, series, value.
std::string per_point_csv(const Report& report);

}  // namespace marginbv
