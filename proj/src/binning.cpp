#include "fatten/binning.hpp"

#include <cmath>

#include "fatten/errors.hpp"

namespace fatten {

PoseBinning::PoseBinning(double lo, double hi, int bins, bool wrap, bool open_ended)
    : lo_(lo), hi_(hi), bins_(bins), wrap_(wrap), open_ended_(open_ended) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
        throw ConfigError("pose binning: invalid range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ")");
    if (bins < 1)
        throw ConfigError("pose binning: need at least 1 cell, got " + std::to_string(bins));
    if (wrap && open_ended)
        throw ConfigError("pose binning: a wrapping range cannot have an open-ended cell");
}

double PoseBinning::centroid(int cell) const {
    if (cell < 0 || cell >= cells())
        throw InputError("pose binning: cell " + std::to_string(cell) + " out of range [0," +
                         std::to_string(cells()) + ")");
    return lo_ + (cell + 0.5) * cell_width();
}

double PoseBinning::wrap_value(double value) const {
    if (!wrap_) return value;
    const double span = hi_ - lo_;
    double v = std::fmod(value - lo_, span);
    if (v < 0.0) v += span;
    return lo_ + v;
}

int PoseBinning::encode(double value) const {
    if (!std::isfinite(value))
        throw InputError("pose binning: non-finite pose value");
    double v = wrap_value(value);
    if (v < lo_)
        throw InputError("pose binning: value " + std::to_string(value) + " below range start " +
                         std::to_string(lo_));
    if (v >= hi_) {
        if (open_ended_) return bins_;
        throw InputError("pose binning: value " + std::to_string(value) + " outside range [" +
                         std::to_string(lo_) + ", " + std::to_string(hi_) + ")");
    }
    int cell = static_cast<int>((v - lo_) / cell_width());
    // fmod rounding can land exactly on hi; clamp to the last regular cell.
    if (cell >= bins_) cell = bins_ - 1;
    return cell;
}

Mat PoseBinning::one_hot(double value) const { return one_hot_cell(encode(value)); }

Mat PoseBinning::one_hot_cell(int cell) const {
    if (cell < 0 || cell >= cells())
        throw InputError("pose binning: cell " + std::to_string(cell) + " out of range [0," +
                         std::to_string(cells()) + ")");
    Mat t = Mat::Zero(1, cells());
    t(0, cell) = 1.0;
    return t;
}

double PoseBinning::centroid_error(int cell_a, int cell_b) const {
    double err = std::abs(centroid(cell_a) - centroid(cell_b));
    if (!wrap_) return err;
    const double span = hi_ - lo_;
    err = std::fmod(err, span);
    return std::min(err, span - err);
}

} // namespace fatten
