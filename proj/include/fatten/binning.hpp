#pragma once

#include <string>
#include <vector>

#include "fatten/mat.hpp"

namespace fatten {

// Quantization of a continuous attribute range [lo, hi) into `bins` equal
// cells, optionally followed by one open-ended cell [hi, +inf) for
// depth-style attributes. Angular ranges set `wrap` and fold values modulo
// the range before encoding.
class PoseBinning {
public:
    PoseBinning() = default;
    PoseBinning(double lo, double hi, int bins, bool wrap = true, bool open_ended = false);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    int bins() const { return bins_; }
    bool wrap() const { return wrap_; }
    bool open_ended() const { return open_ended_; }

    // Total number of cells, i.e. the one-hot dimension.
    int cells() const { return bins_ + (open_ended_ ? 1 : 0); }
    double cell_width() const { return (hi_ - lo_) / bins_; }

    // Cell midpoint; the open-ended cell reports hi + width/2.
    double centroid(int cell) const;

    // Value folded into [lo, hi) for wrapping ranges; identity otherwise.
    double wrap_value(double value) const;

    int encode(double value) const;
    Mat one_hot(double value) const;   // 1 x cells()
    Mat one_hot_cell(int cell) const;  // 1 x cells()

    // Circular distance between two cell centroids folded to half the range
    // for wrapping binnings; plain absolute difference otherwise.
    double centroid_error(int cell_a, int cell_b) const;

    bool operator==(const PoseBinning& other) const = default;

private:
    double lo_ = 0.0;
    double hi_ = 360.0;
    int bins_ = 12;
    bool wrap_ = true;
    bool open_ended_ = false;
};

} // namespace fatten
