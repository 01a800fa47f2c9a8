#include "marginbv/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "marginbv/errors.hpp"

namespace marginbv {

using nlohmann::json;

bool Report::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) {
            return false;
        }
    }
    return true;
}

json number_to_json(double x) {
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    return x;
}

double number_from_json(const json& j) {
    if (j.is_number()) {
        return j.get<double>();
    }
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
    }
    throw ConfigError("expected a number, got " + j.dump());
}

json loss_echo(const LossDescriptor& loss) {
    json j;
    j["name"] = loss.name;
    json params = json::object();
    for (const auto& [k, v] : loss.params) {
        params[k] = number_to_json(v);
    }
    j["params"] = params;
    j["analytic_gradient"] = loss.grad_is_analytic;
    const auto c = classify_gradient_symmetry(loss);
    j["gradient_symmetric"] = c.has_value();
    j["c"] = c ? number_to_json(*c) : json(nullptr);
    const auto parts = even_odd_split(loss);
    j["linear_odd_slope"] = parts.odd_slope ? number_to_json(*parts.odd_slope) : json(nullptr);
    return j;
}

namespace {

json number_map(const std::map<std::string, double>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) {
        j[k] = number_to_json(v);
    }
    return j;
}

std::map<std::string, double> number_map_from(const json& j) {
    std::map<std::string, double> m;
    for (auto it = j.begin(); it != j.end(); ++it) {
        m[it.key()] = number_from_json(it.value());
    }
    return m;
}

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(where + ": missing field '" + key + "'");
    }
    return j.at(key);
}

void require_number(const json& j, const char* key, const std::string& where) {
    const auto& v = require(j, key, where);
    try {
        number_from_json(v);
    } catch (const ConfigError&) {
        throw ConfigError(where + ": field '" + key + "' is not a number");
    }
}

void require_kind(const json& j, const char* key, const std::string& where,
                  json::value_t kind, const char* kind_name) {
    if (require(j, key, where).type() != kind) {
        throw ConfigError(where + ": field '" + key + "' must be " + kind_name);
    }
}

}  // namespace

json to_json(const DecompositionReport& rep) {
    json j;
    j["theorem_id"] = rep.theorem_id;
    j["identity"] = rep.identity;
    j["expected_risk"] = number_to_json(rep.expected_risk);
    j["components"] = number_map(rep.components);
    j["residual"] = number_to_json(rep.residual);
    j["relative_residual"] = number_to_json(rep.relative_residual());
    j["residual_tolerance"] = number_to_json(rep.residual_tolerance);
    j["within_tolerance"] = rep.within_tolerance();
    j["diagnostics"] = number_map(rep.diagnostics);
    j["flags"] = rep.flags;
    j["notes"] = rep.notes;
    if (!rep.per_point.empty()) {
        json pp = json::object();
        for (const auto& [k, series] : rep.per_point) {
            json arr = json::array();
            for (double x : series) {
                arr.push_back(number_to_json(x));
            }
            pp[k] = arr;
        }
        j["per_point"] = pp;
    }
    return j;
}

DecompositionReport decomposition_from_json(const json& j) {
    DecompositionReport rep;
    rep.theorem_id = j.at("theorem_id").get<std::string>();
    rep.identity = j.at("identity").get<std::string>();
    rep.expected_risk = number_from_json(j.at("expected_risk"));
    rep.components = number_map_from(j.at("components"));
    rep.residual = number_from_json(j.at("residual"));
    rep.residual_tolerance = number_from_json(j.at("residual_tolerance"));
    rep.diagnostics = number_map_from(j.at("diagnostics"));
    rep.flags = j.at("flags").get<std::vector<std::string>>();
    rep.notes = j.at("notes").get<std::vector<std::string>>();
    if (j.contains("per_point")) {
        for (auto it = j["per_point"].begin(); it != j["per_point"].end(); ++it) {
            std::vector<double> series;
            for (const auto& x : it.value()) {
                series.push_back(number_from_json(x));
            }
            rep.per_point[it.key()] = std::move(series);
        }
    }
    return rep;
}

json to_json(const CheckResult& c) {
    return json{{"suite", c.suite},
                {"name", c.name},
                {"anchor", c.anchor},
                {"measured", number_to_json(c.measured)},
                {"tolerance", number_to_json(c.tolerance)},
                {"passed", c.passed},
                {"detail", c.detail}};
}

CheckResult check_from_json(const json& j) {
    CheckResult c;
    c.suite = j.at("suite").get<std::string>();
    c.name = j.at("name").get<std::string>();
    c.anchor = j.at("anchor").get<std::string>();
    c.measured = number_from_json(j.at("measured"));
    c.tolerance = number_from_json(j.at("tolerance"));
    c.passed = j.at("passed").get<bool>();
    c.detail = j.at("detail").get<std::string>();
    return c;
}

json to_json(const Report& report) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["command"] = report.command;
    j["loss"] = report.loss;
    json decomps = json::array();
    for (const auto& d : report.decompositions) {
        decomps.push_back(to_json(d));
    }
    j["decompositions"] = decomps;
    json notices = json::array();
    for (const auto& n : report.inapplicable) {
        notices.push_back(json{{"theorem_id", n.theorem_id}, {"reason", n.reason}});
    }
    j["inapplicable"] = notices;
    json checks = json::array();
    for (const auto& c : report.checks) {
        checks.push_back(to_json(c));
    }
    j["checks"] = checks;
    j["warnings"] = report.warnings;
    j["summary"] = report.summary;
    j["passed"] = report.passed();
    if (report.timing) {
        j["timing"] = *report.timing;
    }
    return j;
}

Report report_from_json(const json& j) {
    validate_report(j);
    Report r;
    r.command = j.at("command");
    r.loss = j.at("loss");
    for (const auto& d : j.at("decompositions")) {
        r.decompositions.push_back(decomposition_from_json(d));
    }
    for (const auto& n : j.at("inapplicable")) {
        r.inapplicable.push_back({n.at("theorem_id").get<std::string>(), n.at("reason").get<std::string>()});
    }
    for (const auto& c : j.at("checks")) {
        r.checks.push_back(check_from_json(c));
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.summary = j.at("summary");
    if (j.contains("timing")) {
        r.timing = j.at("timing");
    }
    return r;
}

void validate_report(const json& j) {
    const std::string top = "report";
    if (!j.is_object()) {
        throw ConfigError("report: not a JSON object");
    }
    const auto& version = require(j, "schema_version", top);
    if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
        throw ConfigError("report: unsupported schema_version " + version.dump());
    }
    require_kind(j, "tool_version", top, json::value_t::string, "a string");
    require_kind(j, "command", top, json::value_t::object, "an object");
    require_kind(j, "loss", top, json::value_t::object, "an object");
    require_kind(j, "decompositions", top, json::value_t::array, "an array");
    require_kind(j, "inapplicable", top, json::value_t::array, "an array");
    require_kind(j, "checks", top, json::value_t::array, "an array");
    require_kind(j, "warnings", top, json::value_t::array, "an array");
    require_kind(j, "summary", top, json::value_t::object, "an object");
    require_kind(j, "passed", top, json::value_t::boolean, "a boolean");
    std::size_t i = 0;
    for (const auto& d : j.at("decompositions")) {
        const std::string where = "decompositions[" + std::to_string(i++) + "]";
        require_kind(d, "theorem_id", where, json::value_t::string, "a string");
        require_kind(d, "identity", where, json::value_t::string, "a string");
        for (const char* key : {"expected_risk", "residual", "relative_residual", "residual_tolerance"}) {
            require_number(d, key, where);
        }
        require_kind(d, "within_tolerance", where, json::value_t::boolean, "a boolean");
        require_kind(d, "components", where, json::value_t::object, "an object");
        require_kind(d, "diagnostics", where, json::value_t::object, "an object");
        require_kind(d, "flags", where, json::value_t::array, "an array");
        require_kind(d, "notes", where, json::value_t::array, "an array");
    }
    i = 0;
    for (const auto& c : j.at("checks")) {
        const std::string where = "checks[" + std::to_string(i++) + "]";
        for (const char* key : {"suite", "name", "anchor", "detail"}) {
            require_kind(c, key, where, json::value_t::string, "a string");
        }
        require_number(c, "measured", where);
        require_number(c, "tolerance", where);
        require_kind(c, "passed", where, json::value_t::boolean, "a boolean");
    }
    i = 0;
    for (const auto& n : j.at("inapplicable")) {
        const std::string where = "inapplicable[" + std::to_string(i++) + "]";
        require_kind(n, "theorem_id", where, json::value_t::string, "a string");
        require_kind(n, "reason", where, json::value_t::string, "a string");
    }
}

std::string dump_report(const Report& report) {
    return to_json(report).dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write '" + tmp.string() + "'");
        }
        out << contents;
        out.flush();
        if (!out) {
            throw ConfigError("failed while writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw ConfigError("cannot move report into '" + path + "': " + ec.message());
    }
}

namespace {

std::string fmt(double x) {
    std::ostringstream s;
    s << std::setprecision(6) << x;
    return s.str();
}

}  // namespace

std::string summary_table(const Report& report) {
    std::ostringstream out;
    out << std::left;
    for (const auto& d : report.decompositions) {
        out << d.theorem_id << "  [" << d.identity << "]\n";
        out << "  " << std::setw(28) << (d.theorem_id == theorem::kBuja ? "expected_excess_risk" : "expected_risk")
            << fmt(d.expected_risk) << '\n';
        for (const auto& [k, v] : d.components) {
            out << "  " << std::setw(28) << k << fmt(v) << '\n';
        }
        out << "  " << std::setw(28) << "relative_residual" << fmt(d.relative_residual())
            << (d.within_tolerance() ? "  ok" : "  EXCEEDS " + fmt(d.residual_tolerance)) << '\n';
    }
    for (const auto& n : report.inapplicable) {
        out << n.theorem_id << "  not applicable: " << n.reason << '\n';
    }
    if (!report.checks.empty()) {
        out << "checks\n";
        for (const auto& c : report.checks) {
            out << "  " << (c.passed ? "PASS " : "FAIL ") << std::setw(48) << (c.suite + "/" + c.name)
                << "measured " << fmt(c.measured) << "  tol " << fmt(c.tolerance);
            if (!c.detail.empty()) {
                out << "  (" << c.detail << ')';
            }
            out << '\n';
        }
    }
    for (const auto& w : report.warnings) {
        out << "warning: " << w << '\n';
    }
    return out.str();
}

std::string per_point_csv(const Report& report) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "point,theorem_id,series,value\n";
    for (const auto& d : report.decompositions) {
        for (const auto& [name, series] : d.per_point) {
            for (std::size_t j = 0; j < series.size(); ++j) {
                out << j << ',' << d.theorem_id << ',' << name << ',' << series[j] << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace marginbv
