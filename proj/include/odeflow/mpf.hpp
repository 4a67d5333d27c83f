#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "odeflow/density.hpp"
#include "odeflow/nn.hpp"
#include "odeflow/ode.hpp"
#include "odeflow/parallel.hpp"
#include "odeflow/rng.hpp"

namespace odeflow {

// ---- inference tasks -----------------------------------------------------------

// Independent Gaussian prior per dimension.
struct PriorSpec {
    Vec mean;
    Vec var;
    void validate() const;
};

// Gaussian mean-observation likelihood o ~ N(x, var I).
struct LikelihoodSpec {
    double var = 1.0;
    void validate() const;
};

struct PosteriorRecord {
    Vec mean;
    Vec var;
    double log_evidence = 0.0;  // cumulative log p(o_1..o_m)
};

// One sequential-inference task: prior, likelihood, observation sequence,
// plus the generator's ground truth and the closed-form posterior after
// each observation prefix (the desk-scale oracle).
struct InferenceTask {
    PriorSpec prior;
    LikelihoodSpec likelihood;
    std::vector<Vec> observations;
    Vec latent_true;
    std::vector<PosteriorRecord> posterior;

    int dim() const { return static_cast<int>(prior.mean.size()); }
    int num_observations() const { return static_cast<int>(observations.size()); }
    void validate() const;
};

double prior_logpdf(const PriorSpec& p, const Vec& x);
Vec prior_logpdf_grad(const PriorSpec& p, const Vec& x);
double likelihood_logpdf(const LikelihoodSpec& l, const Vec& o, const Vec& x);
Vec likelihood_logpdf_grad(const LikelihoodSpec& l, const Vec& o, const Vec& x);
// log p(x, O_m) = log prior(x) + sum_{t<=m} log p(o_t|x)
double joint_logpdf(const InferenceTask& task, const Vec& x, int m);
Vec joint_logpdf_grad(const InferenceTask& task, const Vec& x, int m);

enum class TaskFamily { gauss1d, gauss_nd };

struct TaskRanges {
    double prior_var_min = 0.5;
    double prior_var_max = 2.0;
    double noise_var_min = 0.5;
    double noise_var_max = 2.0;
    int observations = 3;
    int dim = 1;
};

std::vector<InferenceTask> task_generate(TaskFamily family, int count, const TaskRanges& ranges,
                                         std::uint64_t seed);

// closed-form conjugate posterior after each prefix; used by the generator
// and as a standalone oracle
std::vector<PosteriorRecord> conjugate_posteriors(const PriorSpec& prior,
                                                  const LikelihoodSpec& lik,
                                                  const std::vector<Vec>& observations);

// ---- particle representation -----------------------------------------------------

// N equally weighted particles with per-particle log-density of the
// current posterior approximation.
struct ParticleSet {
    std::vector<Vec> x;
    Vec logq;
    int stage = 0;

    int count() const { return static_cast<int>(x.size()); }
    int dim() const { return x.empty() ? 0 : static_cast<int>(x.front().size()); }
    Vec mean() const;
    Vec variance() const;  // population variance per dimension
    void validate() const;
};

ParticleSet sample_prior_particles(const PriorSpec& prior, int n, std::uint64_t seed);

// ---- flow velocity network ---------------------------------------------------------

enum class ObsFeature { raw, grad };

struct MpfConfig {
    int particles = 100;
    int flow_steps = 10;
    double horizon = 1.0;
    ObsFeature obs_feature = ObsFeature::raw;
    TimeGrid grid() const { return TimeGrid(0.0, horizon, flow_steps); }
};

// f = h(mean_n phi(x^n), obs feature, x(t), time feature); theta = (phi, h)
// is shared across stages and time.
struct FlowVelocityNet {
    ParamSet phi;  // d -> e
    ParamSet h;    // e + d + d + 2 -> d
    MpfConfig cfg;

    int state_dim() const { return phi.in_dim(); }
    int embed_dim() const { return phi.out_dim(); }
    void validate() const;
};

FlowVelocityNet make_flow_net(int dim, int embed_dim, const std::vector<int>& h_hidden,
                              const MpfConfig& cfg, std::uint64_t seed);
FlowVelocityNet make_zero_flow_net(int dim, int embed_dim, const std::vector<int>& h_hidden,
                                   const MpfConfig& cfg);

std::string flow_net_to_json(const FlowVelocityNet& net);
FlowVelocityNet flow_net_from_json(const std::string& text);

// input layout for h: [embed | obs feature | x | t/T, (T-t)/T]
Vec assemble_flow_input(const FlowVelocityNet& net, const Vec& embed, const Vec& obs,
                        const Vec& x, double t, double horizon, const LikelihoodSpec* lik);

// The per-stage dynamics seen by one particle: the set embedding is frozen
// at stage start, so particles evolve independently within a stage.
class StageDynamics final : public DiffDynamics {
  public:
    StageDynamics(const FlowVelocityNet& net, Vec embed, Vec obs, double horizon,
                  const LikelihoodSpec* lik);
    int dim() const override;
    void eval(const Vec& x, double t, Vec& out) const override;
    std::size_t param_count() const override { return 0; }  // frozen during a stage
    Vec params() const override { return {}; }
    void set_params(const Vec&) override {}
    void jvp(const Vec& x, double t, const Vec& v, Vec& out) const override;
    void vjp(const Vec& x, double t, const Vec& cot, Vec* x_bar, Vec* w_bar) const override;

  private:
    const FlowVelocityNet& net_;
    Vec embed_, obs_;
    double horizon_;
    const LikelihoodSpec* lik_;
};

// ---- the Bayes operator ------------------------------------------------------------

// One recursive Bayes update: transports every particle and its logq
// jointly through the learned flow, conditioned on the next observation.
ParticleSet mpf_step(const ParticleSet& ps, const Vec& o_next, const FlowVelocityNet& net,
                     const TimeGrid& grid, TraceMode trace, const LikelihoodSpec* lik = nullptr,
                     Exec exec = Exec::serial, std::uint64_t probe_seed = 0);

// Prior sampling followed by one mpf_step per observation; returns all
// M+1 stages.
std::vector<ParticleSet> mpf_sequential(const InferenceTask& task, const FlowVelocityNet& net,
                                        int n_particles, const TimeGrid& grid, std::uint64_t seed,
                                        TraceMode trace = TraceMode::exact,
                                        Exec exec = Exec::serial);

// negative-ELBO training loss over all stages:
//   sum_m sum_n [ log q_m(x_m^n) - log p(x_m^n, O_m) ]
double elbo_loss(const std::vector<ParticleSet>& stages, const InferenceTask& task);

// ---- training -----------------------------------------------------------------------

struct ElboGradient {
    double loss = 0.0;
    GradSet phi_grad;
    GradSet h_grad;
};

// Reverse-differentiates the entire discrete flow computation: gradient
// flows through particle positions, the stage-start embeddings and the
// logq transport (second-order terms through the divergence). Forward uses
// Euler steps on the stage grid.
ElboGradient elbo_gradient(const InferenceTask& task, const FlowVelocityNet& net, int n_particles,
                           const TimeGrid& grid, std::uint64_t task_seed,
                           bool detach_stages = false, Exec exec = Exec::serial);

struct MetaTrainOptions {
    bool detach_stages = false;
    double clip_norm = 10.0;  // on the (N*M)-normalized gradient
    Exec exec = Exec::serial;
};

struct MetaTrainResult {
    FlowVelocityNet net;
    std::vector<double> iteration_loss;
    std::vector<double> epoch_mean_loss;
};

// Plain gradient descent on theta; one randomly sampled task per
// iteration, epochs * suite.size() iterations total. Per-task randomness
// derives from mix(seed, task_index).
MetaTrainResult meta_train(const std::vector<InferenceTask>& suite, FlowVelocityNet net0,
                           int epochs, double step, int n_particles, const TimeGrid& grid,
                           std::uint64_t seed, const MetaTrainOptions& opt = {});

// ---- Langevin reference --------------------------------------------------------------

// Euler-Maruyama simulation of dx = drift(x) dt + sqrt(2) dw; the sanity
// oracle for what the deterministic flow should achieve in distribution.
std::vector<Vec> langevin_reference(const std::function<Vec(const Vec&)>& drift_log_target_grad,
                                    std::vector<Vec> cloud, int steps, double dt,
                                    std::uint64_t seed, Exec exec = Exec::serial);

// ---- task suite serialization ----------------------------------------------------------

std::string task_suite_to_json(const std::vector<InferenceTask>& suite);
std::vector<InferenceTask> task_suite_from_json(const std::string& text);

}  // namespace odeflow
