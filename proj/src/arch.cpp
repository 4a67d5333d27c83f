#include "odeflow/arch.hpp"

#include <cmath>
#include <stdexcept>

namespace odeflow {

static void require_square_net(const ParamSet& p, const char* what) {
    p.validate();
    if (p.in_dim() != p.out_dim())
        throw std::invalid_argument(std::string(what) + ": net must map d -> d");
}

BlockSpec make_resnet_block(ParamSet f, double h) {
    require_square_net(f, "resnet block");
    BlockSpec b;
    b.kind = BlockKind::resnet;
    b.f = std::move(f);
    b.scale = h;
    return b;
}

BlockSpec make_polynet_block(ParamSet f) {
    require_square_net(f, "polynet block");
    BlockSpec b;
    b.kind = BlockKind::polynet;
    b.f = std::move(f);
    return b;
}

BlockSpec make_fractal2_block(ParamSet f, ParamSet affine) {
    require_square_net(f, "fractal2 block");
    require_square_net(affine, "fractal2 affine branch");
    if (affine.layers.size() != 1 || affine.layers[0].act != Act::identity)
        throw std::invalid_argument("fractal2: parallel branch must be a single affine layer");
    BlockSpec b;
    b.kind = BlockKind::fractal2;
    b.f = std::move(f);
    b.g = std::move(affine);
    return b;
}

BlockSpec make_lm_resnet_block(ParamSet f, double k) {
    require_square_net(f, "lm_resnet block");
    BlockSpec b;
    b.kind = BlockKind::lm_resnet;
    b.f = std::move(f);
    b.lm_k = k;
    return b;
}

BlockSpec make_second_order_block(ParamSet f, double h) {
    require_square_net(f, "second_order block");
    BlockSpec b;
    b.kind = BlockKind::second_order;
    b.f = std::move(f);
    b.scale = h;
    return b;
}

BlockSpec make_antisymmetric_block(Mat w, Mat v, Vec b_in, double eps) {
    if (w.rows != w.cols) throw std::invalid_argument("antisymmetric block: W must be square");
    if (v.rows != w.rows || static_cast<int>(b_in.size()) != w.rows)
        throw std::invalid_argument("antisymmetric block: V/b row mismatch");
    BlockSpec b;
    b.kind = BlockKind::antisymmetric_rnn;
    b.aw = std::move(w);
    b.av = std::move(v);
    b.ab = std::move(b_in);
    b.scale = eps;
    return b;
}

BlockSpec make_reversible_block(ParamSet f, ParamSet g) {
    require_square_net(f, "reversible block f");
    require_square_net(g, "reversible block g");
    if (f.in_dim() != g.in_dim())
        throw std::invalid_argument("reversible block: channel dimensions differ");
    BlockSpec b;
    b.kind = BlockKind::reversible_pair;
    b.f = std::move(f);
    b.g = std::move(g);
    return b;
}

Mat antisymmetric_matrix(const Mat& w) {
    if (w.rows != w.cols) throw std::invalid_argument("antisymmetric_matrix: non-square input");
    Mat a(w.rows, w.cols);
    for (int i = 0; i < w.rows; ++i)
        for (int j = 0; j < w.cols; ++j) a(i, j) = w(i, j) - w(j, i);
    return a;
}

static const Vec& need_aux(const std::optional<Vec>& aux, const char* kind) {
    if (!aux.has_value())
        throw std::invalid_argument(std::string(kind) + ": missing aux state");
    return *aux;
}

BlockOutput block_forward(const BlockSpec& b, const Vec& x, const std::optional<Vec>& aux) {
    switch (b.kind) {
        case BlockKind::resnet: {
            Vec fx = mlp_forward(b.f, x);
            Vec y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b.scale * fx[i];
            return {std::move(y), std::nullopt};
        }
        case BlockKind::polynet: {
            Vec fx = mlp_forward(b.f, x);
            Vec ffx = mlp_forward(b.f, fx);
            Vec y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + fx[i] + ffx[i];
            return {std::move(y), std::nullopt};
        }
        case BlockKind::fractal2: {
            Vec deep = mlp_forward(b.f, mlp_forward(b.f, x));
            Vec lin = mlp_forward(b.g, x);
            Vec y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5 * (deep[i] + lin[i]);
            return {std::move(y), std::nullopt};
        }
        case BlockKind::lm_resnet: {
            const Vec& prev = need_aux(aux, "lm_resnet");
            Vec fx = mlp_forward(b.f, x);
            Vec y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = (1.0 - b.lm_k) * x[i] + b.lm_k * prev[i] + fx[i];
            return {std::move(y), x};  // carries X_t forward as next aux
        }
        case BlockKind::second_order: {
            const Vec& prev = need_aux(aux, "second_order");
            Vec fx = mlp_forward(b.f, x);
            Vec y(x.size());
            const double h2 = b.scale * b.scale;
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = 2.0 * x[i] - prev[i] + h2 * fx[i];
            return {std::move(y), x};
        }
        case BlockKind::antisymmetric_rnn: {
            Vec pre(static_cast<std::size_t>(b.aw.rows), 0.0);
            for (int i = 0; i < b.aw.rows; ++i) {
                double s = b.ab[static_cast<std::size_t>(i)];
                for (int j = 0; j < b.aw.cols; ++j)
                    s += (b.aw(i, j) - b.aw(j, i)) * x[static_cast<std::size_t>(j)];
                pre[static_cast<std::size_t>(i)] = s;
            }
            if (aux.has_value()) {
                const Vec& u = *aux;
                if (static_cast<int>(u.size()) != b.av.cols)
                    throw std::invalid_argument("antisymmetric_rnn: input dimension mismatch");
                for (int i = 0; i < b.av.rows; ++i)
                    for (int j = 0; j < b.av.cols; ++j)
                        pre[static_cast<std::size_t>(i)] += b.av(i, j) * u[static_cast<std::size_t>(j)];
            }
            Vec y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b.scale * std::tanh(pre[i]);
            return {std::move(y), aux};
        }
        case BlockKind::reversible_pair: {
            const Vec& x2 = need_aux(aux, "reversible_pair");
            Vec f2 = mlp_forward(b.f, x2);
            Vec y1(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y1[i] = x[i] + f2[i];
            Vec g1 = mlp_forward(b.g, y1);
            Vec y2(x2.size());
            for (std::size_t i = 0; i < x2.size(); ++i) y2[i] = x2[i] + g1[i];
            return {std::move(y1), std::move(y2)};
        }
    }
    throw std::logic_error("block_forward: unreachable");
}

std::pair<Vec, Vec> block_inverse(const BlockSpec& b, const Vec& y, const Vec& y_next) {
    if (b.kind != BlockKind::reversible_pair)
        throw std::invalid_argument("block_inverse: block is not a reversible pair");
    Vec g1 = mlp_forward(b.g, y);
    Vec x2(y_next.size());
    for (std::size_t i = 0; i < y_next.size(); ++i) x2[i] = y_next[i] - g1[i];
    Vec f2 = mlp_forward(b.f, x2);
    Vec x1(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) x1[i] = y[i] - f2[i];
    return {std::move(x1), std::move(x2)};
}

}  // namespace odeflow
