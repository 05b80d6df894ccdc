#include "dph/csv.hpp"

#include <array>
#include <charconv>
#include <ostream>

#include "dph/error.hpp"

namespace dph::csv {

std::string format_number(double value) {
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) {
        throw InvalidArgument("cannot format number");
    }
    return std::string(buf.data(), end);
}

void write_metrics(std::ostream& out, std::span<const trainer::TrainMetrics> metrics) {
    out << "step,loss,cdpo,dph,margin,reward_acc,grad_norm,lr\n";
    for (const auto& m : metrics) {
        out << m.step << ',' << format_number(m.loss) << ',' << format_number(m.cdpo) << ',' << format_number(m.dph)
            << ',' << format_number(m.margin) << ',' << format_number(m.reward_acc) << ','
            << format_number(m.grad_norm) << ',' << format_number(m.lr) << '\n';
    }
}

void write_landscape(std::ostream& out, std::span<const objectives::LandscapeCell> cells) {
    out << "r_w,r_l,loss\n";
    for (const auto& c : cells) {
        out << format_number(c.r_w) << ',' << format_number(c.r_l) << ',' << format_number(c.loss) << '\n';
    }
}

}  // namespace dph::csv
