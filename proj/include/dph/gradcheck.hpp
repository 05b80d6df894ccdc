#pragma once

// Finite-difference verification of every analytic gradient in the library.
//
// Relative error of one component is |a - n| / max(|a|, |n|, floor), where a
// is the analytic and n the central-difference value. The floor keeps
// components whose true value is (near) zero from dividing by rounding noise.

#include <cstdint>
#include <string>
#include <vector>

namespace dph::gradcheck {

struct Report {
    std::string scope;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::string worst;  // location of max_rel_error

    bool passed() const { return checked > 0 && max_rel_error <= tolerance; }
};

/// sep/con DPH gradients over r_w, r_l in {-4..4}, eps in {0.05, 0.1, 0.25, 0.5},
/// plus cDPO policy gradients; step 1e-6, float64, floor 1e-3, tolerance 1e-6.
Report objectives();

/// Reward-head gradients (every head tensor and h) for all three poolers,
/// with and without a fixed dropout mask; float64, tolerance 1e-6.
Report head(std::uint64_t seed);

/// Same suite with the analytic pass in float32; tolerance 1e-4.
Report head_f32(std::uint64_t seed);

/// Tiny backbone (L=1, d=8, H=2, V=11, S=8): every parameter of a loss mixing
/// masked log-probs and last-hidden terms; tolerance 1e-4.
Report backbone(std::uint64_t seed);

/// Alignment loss gradient through backbone and head on a tiny model with
/// dropout off and no prior term; tolerance 1e-4. With dph_only the cDPO
/// weight is 0 and only the head is checked.
Report alignment(std::uint64_t seed, bool dph_only);

/// Suites behind a CLI scope name: objectives, head, backbone.
std::vector<Report> run_scope(const std::string& scope, std::uint64_t seed);

}  // namespace dph::gradcheck
