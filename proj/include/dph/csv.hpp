#pragma once

// Locale-independent CSV emission for metrics and loss landscapes.

#include <iosfwd>
#include <span>
#include <string>

#include "dph/objectives.hpp"
#include "dph/trainer.hpp"

namespace dph::csv {

/// Shortest round-trip decimal representation, '.' separator.
std::string format_number(double value);

/// Header `step,loss,cdpo,dph,margin,reward_acc,grad_norm,lr`, one row per metric.
void write_metrics(std::ostream& out, std::span<const trainer::TrainMetrics> metrics);

/// Header `r_w,r_l,loss`, one row per cell in grid order.
void write_landscape(std::ostream& out, std::span<const objectives::LandscapeCell> cells);

}  // namespace dph::csv
