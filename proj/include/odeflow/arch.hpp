#pragma once

#include <optional>

#include "odeflow/nn.hpp"
#include "odeflow/vec.hpp"

namespace odeflow {

enum class BlockKind {
    resnet,            // x + h f(x)
    polynet,           // x + f(x) + f(f(x))
    fractal2,          // mean((f.f)(x), affine(x))
    lm_resnet,         // (1-k) x + k x_prev + f(x)
    second_order,      // 2x - x_prev + h^2 f(x)
    antisymmetric_rnn, // x + eps tanh((W - W^T) x + V u + b)
    reversible_pair,   // y1 = x1 + f(x2); y2 = x2 + g(y1)
};

struct BlockSpec {
    BlockKind kind = BlockKind::resnet;
    ParamSet f;        // inner dynamics net
    ParamSet g;        // reversible second net / fractal affine branch
    double scale = 1.0;  // step scale h, or eps for the antisymmetric step
    double lm_k = 0.0;   // lm_resnet mixing weight

    // antisymmetric_rnn stores the raw recurrent matrix; (W - W^T) is
    // formed at evaluation.
    Mat aw;  // d x d
    Mat av;  // d x u
    Vec ab;  // d
};

BlockSpec make_resnet_block(ParamSet f, double h);
BlockSpec make_polynet_block(ParamSet f);
BlockSpec make_fractal2_block(ParamSet f, ParamSet affine);
BlockSpec make_lm_resnet_block(ParamSet f, double k);
BlockSpec make_second_order_block(ParamSet f, double h);
BlockSpec make_antisymmetric_block(Mat w, Mat v, Vec b, double eps);
BlockSpec make_reversible_block(ParamSet f, ParamSet g);

// Returns A = W - W^T (skew-symmetric, so the linearized step has a
// Jacobian with purely imaginary spectrum).
Mat antisymmetric_matrix(const Mat& w);

struct BlockOutput {
    Vec y;
    std::optional<Vec> aux;  // second channel / carried previous state
};

// aux carries X_{t-1} for lm_resnet and second_order, the second channel
// for reversible_pair, and the external input u for antisymmetric_rnn.
BlockOutput block_forward(const BlockSpec& b, const Vec& x, const std::optional<Vec>& aux);

// reversible_pair only: recovers (x1, x2) from (y1, y2).
std::pair<Vec, Vec> block_inverse(const BlockSpec& b, const Vec& y, const Vec& y_next);

}  // namespace odeflow
