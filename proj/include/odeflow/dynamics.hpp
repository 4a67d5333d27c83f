#pragma once

#include <memory>

#include "odeflow/nn.hpp"
#include "odeflow/ode.hpp"

namespace odeflow {

// Dynamics with derivative contracts: Jacobian-vector products for
// divergence computation and vector-Jacobian products (w.r.t. state and a
// flat parameter vector) for adjoint sweeps.
class DiffDynamics : public Dynamics {
  public:
    virtual std::size_t param_count() const = 0;
    virtual Vec params() const = 0;
    virtual void set_params(const Vec& theta) = 0;

    // out = (df/dx) v
    virtual void jvp(const Vec& x, double t, const Vec& v, Vec& out) const = 0;

    // x_bar = (df/dx)^T cot (overwritten); w_bar += (df/dtheta)^T cot
    // (accumulated; may be null).
    virtual void vjp(const Vec& x, double t, const Vec& cot, Vec* x_bar, Vec* w_bar) const = 0;
};

// dx/dt = A x; parameters are the entries of A (row-major).
class LinearDynamics final : public DiffDynamics {
  public:
    explicit LinearDynamics(Mat a) : a_(std::move(a)) {}
    static LinearDynamics scalar(double rate) {
        Mat m(1, 1);
        m(0, 0) = rate;
        return LinearDynamics(m);
    }

    int dim() const override { return a_.rows; }
    void eval(const Vec& x, double, Vec& out) const override { matvec(a_, x, out); }
    std::size_t param_count() const override { return a_.a.size(); }
    Vec params() const override { return a_.a; }
    void set_params(const Vec& theta) override { a_.a = theta; }
    void jvp(const Vec&, double, const Vec& v, Vec& out) const override { matvec(a_, v, out); }
    void vjp(const Vec& x, double, const Vec& cot, Vec* x_bar, Vec* w_bar) const override {
        if (x_bar != nullptr) matvec_t(a_, cot, *x_bar);
        if (w_bar != nullptr)
            for (int i = 0; i < a_.rows; ++i)
                for (int j = 0; j < a_.cols; ++j)
                    (*w_bar)[static_cast<std::size_t>(i) * a_.cols + j] +=
                        cot[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
    }

    const Mat& matrix() const { return a_; }

  private:
    Mat a_;
};

// dx/dt = net(x), autonomous tanh network with matching in/out dimension.
class MlpDynamics final : public DiffDynamics {
  public:
    explicit MlpDynamics(ParamSet net) : net_(std::move(net)) {
        net_.validate();
        if (net_.in_dim() != net_.out_dim())
            throw std::invalid_argument("MlpDynamics: net must map d -> d");
    }

    int dim() const override { return net_.in_dim(); }
    void eval(const Vec& x, double, Vec& out) const override { out = mlp_forward(net_, x); }
    std::size_t param_count() const override { return net_.param_count(); }
    Vec params() const override { return net_.flatten(); }
    void set_params(const Vec& theta) override { net_.unflatten(theta); }
    void jvp(const Vec& x, double, const Vec& v, Vec& out) const override {
        out = mlp_jvp(net_, x, v);
    }
    void vjp(const Vec& x, double, const Vec& cot, Vec* x_bar, Vec* w_bar) const override {
        auto [dx, dp] = mlp_vjp(net_, x, cot);
        if (x_bar != nullptr) *x_bar = std::move(dx);
        if (w_bar != nullptr) {
            Vec flat = dp.flatten();
            for (std::size_t i = 0; i < flat.size(); ++i) (*w_bar)[i] += flat[i];
        }
    }

    const ParamSet& net() const { return net_; }

  private:
    ParamSet net_;
};

// dx/dt = grad(phi)(x) for a scalar-output potential network. The Jacobian
// of the field is the Hessian of phi, so jvp runs a Hessian-vector product.
class PotentialDynamics final : public DiffDynamics {
  public:
    explicit PotentialDynamics(ParamSet phi) : phi_(std::move(phi)) {
        phi_.validate();
        if (phi_.out_dim() != 1)
            throw std::invalid_argument("PotentialDynamics: potential must be scalar-output");
    }

    int dim() const override { return phi_.in_dim(); }
    void eval(const Vec& x, double, Vec& out) const override {
        out = mlp_vjp(phi_, x, Vec{1.0}).first;
    }
    std::size_t param_count() const override { return phi_.param_count(); }
    Vec params() const override { return phi_.flatten(); }
    void set_params(const Vec& theta) override { phi_.unflatten(theta); }
    void jvp(const Vec& x, double, const Vec& v, Vec& out) const override {
        out = mlp_grad_hvp(phi_, x, v);
    }
    void vjp(const Vec& x, double, const Vec& cot, Vec* x_bar, Vec*) const override {
        // symmetric Jacobian: (df/dx)^T cot = Hessian(phi) cot
        if (x_bar != nullptr) *x_bar = mlp_grad_hvp(phi_, x, cot);
    }

    const ParamSet& potential() const { return phi_; }

  private:
    ParamSet phi_;
};

// Divergence-free 2-D rotation field f(x) = (-x2, x1); no parameters.
class RotationField final : public DiffDynamics {
  public:
    int dim() const override { return 2; }
    void eval(const Vec& x, double, Vec& out) const override {
        out.assign(2, 0.0);
        out[0] = -x[1];
        out[1] = x[0];
    }
    std::size_t param_count() const override { return 0; }
    Vec params() const override { return {}; }
    void set_params(const Vec&) override {}
    void jvp(const Vec&, double, const Vec& v, Vec& out) const override {
        out.assign(2, 0.0);
        out[0] = -v[1];
        out[1] = v[0];
    }
    void vjp(const Vec&, double, const Vec& cot, Vec* x_bar, Vec*) const override {
        if (x_bar != nullptr) {
            x_bar->assign(2, 0.0);
            (*x_bar)[0] = cot[1];
            (*x_bar)[1] = -cot[0];
        }
    }
};

}  // namespace odeflow
