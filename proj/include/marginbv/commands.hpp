#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "marginbv/matrix.hpp"
#include "marginbv/report.hpp"

namespace marginbv {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;

struct CommandResult {
    int exit_code = kExitOk;
    Report report;
};

// Seed used when --seed is not given: MARGINBV_SEED if set, else 0.
std::uint64_t default_seed();

// 2 for configuration and usage errors, 1 for everything else.
int exit_code_for(const std::exception& e);

struct VerifyOptions {
    std::string loss = "logistic";
    // symmetry, bregman, conjugate, decomp, ensemble or all
    std::string suite = "all";
    // Overrides the tolerance of constancy and identity-residual checks.
    std::optional<double> tol;
    std::uint64_t seed = 0;
};

CommandResult cmd_verify(const VerifyOptions& opts);

struct DiagnoseOptions {
    std::optional<std::string> data;
    std::optional<std::string> synthetic;
    std::string loss = "logistic";
    std::size_t models = 50;
    std::uint64_t seed = 0;
    bool per_point = false;
    bool require_noise = false;
    unsigned threads = 1;
    double learning_rate = 0.1;
    int iterations = 500;
    double l2_penalty = 1e-4;
    double init_scale = 0.0;
    bool timing = false;
};

CommandResult cmd_diagnose(const DiagnoseOptions& opts);

// Members CSV: header point_id,member_1,...,member_M,label; one row per point.
struct MembersTable {
    std::vector<std::string> point_ids;
    Matrix margins;  // M x N
    std::vector<int> labels;
};

MembersTable read_members_csv(std::istream& in);
MembersTable read_members_csv(const std::string& path);

struct EnsembleOptions {
    std::string members;
    std::string loss = "logistic";
    // mean, additive or centroid
    std::string combiner = "mean";
    bool per_point = false;
};

CommandResult cmd_ensemble(const EnsembleOptions& opts);
CommandResult cmd_ensemble(const MembersTable& table, const EnsembleOptions& opts);

}  // namespace marginbv
