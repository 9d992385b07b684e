#pragma once

#include "fatten/nn.hpp"

namespace fatten {

struct GradCheckOptions {
    uint64_t seed = 0;
    int seeds = 20;
    double tolerance = 1e-5;
    // Central-difference probes per tensor for the composed networks; layer
    // checks probe every element.
    int entries_per_tensor = 4;
    // Fault injection: scales one analytic gradient entry by 1.1 so the
    // check must fail.
    bool corrupt = false;
};

// Verifies analytic gradients of every layer type (linear, batch norm,
// relu/elu/softmax), the pose predictor under cross-entropy, and the
// composed encoder/decoder under the multi-task loss with both frozen heads
// attached. Entries are merged across seeds by tensor name (max error).
GradCheckReport full_gradient_check(const GradCheckOptions& options);

} // namespace fatten
