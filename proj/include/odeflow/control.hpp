#pragma once

#include <cstdint>
#include <vector>

#include "odeflow/nn.hpp"
#include "odeflow/parallel.hpp"
#include "odeflow/vec.hpp"

namespace odeflow {

// Layer transition X_{t+1} = g(X_t, W_t): residual g = x + net(x) or
// direct g = net(x).
enum class LayerForm { residual, direct };
enum class Reg { none, l2 };

// Per-timestep parameters of the discrete network, i.e. the open-loop
// control sequence.
struct ControlPath {
    std::vector<ParamSet> w;
    LayerForm form = LayerForm::residual;
    double delta = 0.0;  // running-cost weight
    Reg reg = Reg::none;

    int depth() const { return static_cast<int>(w.size()); }
    void validate() const;
};

enum class LossKind { squared, logistic };

struct SupervisedBatch {
    std::vector<Vec> inputs;
    Vec targets;  // labels in {-1,+1} for logistic
    LossKind loss = LossKind::logistic;

    std::size_t size() const { return inputs.size(); }
    void validate() const;
};

Vec layer_apply(const ParamSet& w, LayerForm form, const Vec& x);
// x_bar = (dg/dx)^T cot (overwritten); w_bar += (dg/dW)^T cot when non-null.
void layer_vjp(const ParamSet& w, LayerForm form, const Vec& x, const Vec& cot, Vec* x_bar,
               GradSet* w_bar);

double regularizer_value(const ParamSet& w, Reg reg);
GradSet regularizer_grad(const ParamSet& w, Reg reg);

// H(t, x, p, W) = p . g(x, W, t) - delta R(W)
double discrete_hamiltonian(int t, const Vec& x, const Vec& p, const ParamSet& w, LayerForm form,
                            double delta, Reg reg);

// terminal loss on the first state coordinate
double loss_value(const Vec& x_terminal, double target, LossKind kind);
Vec loss_grad(const Vec& x_terminal, double target, LossKind kind);
bool misclassified(const Vec& x_terminal, double target);

std::vector<Vec> forward_sweep(const ControlPath& path, const Vec& x0);

// Backward costate recursion preserving P_t = -dL/dX_t: P_T = -loss_grad,
// P_t = (dg/dx)^T P_{t+1}.
std::vector<Vec> adjoint_sweep(const std::vector<Vec>& traj, const ControlPath& path,
                               const Vec& loss_gradient);

// Per-t first-order stationarity certificate of the maximum condition:
// ||grad_W H(t, X_t, P_{t+1}, W_t)||_inf for one trajectory.
Vec pmp_residual(const std::vector<Vec>& traj, const ControlPath& path,
                 const std::vector<Vec>& adjoints);

// ---- batch kernel ------------------------------------------------------------

// One full forward/backward pass over the batch. Per-example sweeps run
// under `exec`; the reduction over examples is serial in index order.
struct BatchEval {
    double loss = 0.0;             // mean loss + delta * sum_t R(W_t)
    double err = 0.0;              // misclassification fraction
    std::vector<GradSet> hgrad;    // per t: grad_W of the batch Hamiltonian
    double pmp_residual_max = 0.0; // max_t ||hgrad_t||_inf
    // retained per-example sweep data (for Hamiltonian re-evaluation)
    std::vector<std::vector<Vec>> states;    // [example][t]
    std::vector<std::vector<Vec>> adjoints;  // [example][t]
};

BatchEval batch_eval(const SupervisedBatch& batch, const ControlPath& path, Exec exec,
                     bool keep_sweeps = false);

// ---- trainers ----------------------------------------------------------------

enum class MsaMode { argmax_inner_ascent, gradient_step, discrete_argmax };

struct TrainOptions {
    Exec exec = Exec::serial;
    int inner_ascent_steps = 5;
    double inner_step_factor = 0.1;
    int backtrack_limit = 30;
    double divergence_threshold = 1e6;
};

struct TrainRecord {
    int iter = 0;
    double train_loss = 0.0;
    double train_err = 0.0;
    double pmp_residual_max = 0.0;
    double sparsity = 0.0;  // fraction of exactly-zero parameters
};

struct TrainResult {
    ControlPath path;
    std::vector<TrainRecord> history;  // iters+1 records; last is post-training
};

struct TrainingDiverged : std::runtime_error {
    int iter;
    TrainingDiverged(int iter_, double loss)
        : std::runtime_error("training diverged at iteration " + std::to_string(iter_) +
                             " (loss " + std::to_string(loss) + ")"),
          iter(iter_) {}
};

TrainResult msa_train(const SupervisedBatch& batch, ControlPath path0, MsaMode mode, int iters,
                      double step, const TrainOptions& opt = {});
TrainResult sgd_train(const SupervisedBatch& batch, ControlPath path0, int iters, double step,
                      const TrainOptions& opt = {});

double path_sparsity(const ControlPath& path);

// ---- task + path construction -------------------------------------------------

// Two 2-D blobs labelled +/-1; noise is redrawn until every point keeps
// sign(x1) consistent with its label at the given margin, so a separating
// ternary-weight network always exists.
SupervisedBatch make_blobs(int n_per_class, double center, double noise_sd, double margin,
                           LossKind loss, std::uint64_t seed);

ControlPath make_residual_path(int depth, int dim, double delta, Reg reg, std::uint64_t seed);
ControlPath make_ternary_path(int depth, int dim, double delta, Reg reg, std::uint64_t seed);

}  // namespace odeflow
