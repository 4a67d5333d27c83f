#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "odeflow/rng.hpp"
#include "odeflow/vec.hpp"

namespace odeflow {

enum class Act { identity, tanh };

const char* act_name(Act a);
Act parse_act(const std::string& name);

struct DenseLayer {
    Mat w;   // out x in
    Vec b;   // out
    Act act = Act::tanh;

    int in_dim() const { return w.cols; }
    int out_dim() const { return w.rows; }
};

// Dense-network parameters: an ordered stack of affine layers with tanh or
// identity activation. Consecutive layer dimensions must chain.
struct ParamSet {
    std::vector<DenseLayer> layers;

    int in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    int out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
    std::size_t param_count() const;

    // flatten/unflatten round-trip exactly: per layer, weights row-major
    // then bias.
    Vec flatten() const;
    void unflatten(const Vec& flat);

    void fill(double v);
    void scale(double a);
    void add_scaled(const ParamSet& g, double a);  // this += a*g
    double max_abs_entry() const;
    double frobenius_norm() const;
    bool same_shape(const ParamSet& o) const;
    void validate() const;  // dimension chaining + finiteness
};

// Gradient w.r.t. a ParamSet; shape-congruent by construction.
using GradSet = ParamSet;

ParamSet make_mlp(const std::vector<int>& dims, const std::vector<Act>& acts);
// weights ~ N(0, 1/in_dim), biases 0
ParamSet make_mlp_random(const std::vector<int>& dims, const std::vector<Act>& acts, Rng& rng);
GradSet make_zero_like(const ParamSet& p);

// ---- forward / derivatives -------------------------------------------------

Vec mlp_forward(const ParamSet& p, const Vec& x);

struct MlpCache {
    std::vector<Vec> a;  // a[0] = input, a[l] = layer l output
    std::vector<Vec> z;  // pre-activations
};

Vec mlp_forward_cached(const ParamSet& p, const Vec& x, MlpCache& cache);

// Vector-Jacobian products w.r.t. input and parameters; dp accumulates.
void mlp_vjp_cached(const ParamSet& p, const MlpCache& cache, const Vec& cotangent, Vec* dx,
                    GradSet* dp);
std::pair<Vec, GradSet> mlp_vjp(const ParamSet& p, const Vec& x, const Vec& cotangent);

// Jacobian-vector product (forward tangent).
Vec mlp_jvp(const ParamSet& p, const Vec& x, const Vec& tangent);

// Trace of the Jacobian of the network output w.r.t. the input slice
// [x_off, x_off+x_dim); requires out_dim == x_dim. Exact, via x_dim
// Jacobian-vector products.
double mlp_block_divergence(const ParamSet& p, const Vec& u, int x_off, int x_dim);

// Reverse-mode derivative of mlp_block_divergence: accumulates
// bar * d(div)/d(input) into u_bar and bar * d(div)/d(params) into p_bar.
// Differentiates the JVP chain, so it carries the activation second
// derivative.
void mlp_block_divergence_vjp(const ParamSet& p, const Vec& u, int x_off, int x_dim, double bar,
                              Vec& u_bar, GradSet& p_bar);

// Hessian-vector product of a scalar-output network: d/da grad(phi)(x + a v).
Vec mlp_grad_hvp(const ParamSet& phi, const Vec& x, const Vec& v);

// ---- permutation-invariant set embedding ------------------------------------

struct SetEmbedding {
    Vec pooled;  // mean over members of phi(member)
};

// Members are summed in the order of a canonical sort of indices by member
// value, which makes the mean bitwise permutation-invariant.
SetEmbedding deepset_embed(const ParamSet& phi, const std::vector<Vec>& members);
std::vector<std::size_t> canonical_member_order(const std::vector<Vec>& members);

// ---- gradient checking -------------------------------------------------------

struct ScalarObjective {
    std::function<double(const ParamSet&)> value;
    std::function<GradSet(const ParamSet&)> grad;
};

// Central finite differences over every coordinate against the analytic
// gradient; returns the worst relative error.
double grad_check(const ParamSet& p, const ScalarObjective& objective, double eps);

// ---- serialization -----------------------------------------------------------

// Flat JSON object {dims, activations, flat_values[]} with hex-float
// values; round-trips IEEE754 doubles exactly.
std::string paramset_to_json(const ParamSet& p);
ParamSet paramset_from_json(const std::string& json_text);

std::string hex_double(double v);
double parse_hex_double(const std::string& s);

}  // namespace odeflow
