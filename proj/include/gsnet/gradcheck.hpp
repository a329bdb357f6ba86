#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gsnet {

struct GradCheckRow {
    std::string name;
    double rel_error = 0;  // worst over trials
    double tolerance = 0;
    std::size_t coords = 0;
    bool pass = false;
};

/// Central-difference checks in double precision for every differentiable
/// op, plus the composed fusion + decoder head of a tiny model (H=32, N=2).
/// Relative error is ||g_analytic - g_numeric|| / max(both norms, 1e-12).
std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed = 0, int trials = 3);

/// Fixed-width table, one row per check.
std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace gsnet
