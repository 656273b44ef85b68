#pragma once

#include <functional>

#include "defenses.hpp"

namespace advgrad {

// A differentiable stand-in recorded on a fresh tape; the wrapper
// differentiates it to obtain the substituted backward pass.
using SubstituteFn = std::function<ValueId(Tape&, ValueId)>;

// Forward pass of d, backward pass of g evaluated at the same (pre-defense)
// input. The result is itself a Preprocessor and composes inside pipelines.
PreprocessorPtr wrap_with_forward_substitute(PreprocessorPtr d, SubstituteFn g);

// Forward pass of d, backward applied verbatim:
// (input, upstream gradient) -> input gradient.
PreprocessorPtr wrap_with_backward_fn(
    PreprocessorPtr d,
    std::function<Tensor(const Tensor&, const Tensor&)> backward_fn);

// The straight-through estimator: g = identity.
PreprocessorPtr straight_through(PreprocessorPtr d);

// Copy of a pipeline with every non-differentiable stage wrapped
// straight-through.
DefensePipeline with_straight_through(const DefensePipeline& pipeline);

}  // namespace advgrad
