#ifndef RESDIFF_DIFFUSION_HPP
#define RESDIFF_DIFFUSION_HPP

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "resdiff/rng.hpp"
#include "resdiff/types.hpp"

namespace resdiff::diffusion {

// User-facing sampler/schedule settings (JSON section `diffusion`).
struct DiffusionSettings {
    int T = 1000;
    double eta1 = 0.001;
    double etaT = 0.999;
    double p = 1.0;
    double kappa = 0.7;
    int sample_steps = 20;
};

// Monotone noise schedule {eta_t} with per-step increments alpha_t.
// eta follows a geometric progression in sqrt(eta):
//   sqrt(eta_t) = sqrt(eta_1) * b0^beta_t,  beta_t = ((t-1)/(T-1))^p * (T-1),
//   b0 = exp(log(eta_T/eta_1) / (2(T-1))),
// which interpolates eta_1 .. eta_T exactly. By convention eta_0 = 0, so the
// reverse chain terminates on the clean signal.
struct NoiseSchedule {
    int T = 0;
    Vec eta;       // eta[t-1] = eta_t, strictly increasing in (0, 1)
    Vec alpha;     // alpha[t-1] = eta_t - eta_{t-1}, alpha_1 = eta_1
    double kappa = 0.7;

    // eta with the eta_0 = 0 convention; t in [0, T].
    double eta_at(int t) const { return t <= 0 ? 0.0 : eta[t - 1]; }

    static NoiseSchedule make(int T, double eta1, double etaT, double p, double kappa) {
        if (T < 2) throw ConfigError("schedule: T must be >= 2");
        if (!(eta1 > 0.0 && eta1 < etaT && etaT < 1.0))
            throw ConfigError("schedule: require 0 < eta1 < etaT < 1");
        if (p <= 0.0) throw ConfigError("schedule: shape exponent must be > 0");
        if (kappa < 0.0) throw ConfigError("schedule: kappa must be >= 0");
        NoiseSchedule s;
        s.T = T;
        s.kappa = kappa;
        s.eta.resize(T);
        s.alpha.resize(T);
        const double lr = std::log(etaT / eta1);
        for (int t = 1; t <= T; ++t) {
            double frac = std::pow(double(t - 1) / double(T - 1), p);
            s.eta[t - 1] = eta1 * std::exp(lr * frac);
        }
        s.alpha[0] = s.eta[0];
        for (int t = 2; t <= T; ++t) s.alpha[t - 1] = s.eta[t - 1] - s.eta[t - 2];
        return s;
    }

    static NoiseSchedule make(const DiffusionSettings& ds) {
        return make(ds.T, ds.eta1, ds.etaT, ds.p, ds.kappa);
    }
};

// Sparse subset of the T-step chain used at sampling time. Steps are chosen
// uniformly in t (rounded linspace over [1, T], always including T), and the
// effective increments are recomputed between consecutive selected steps so
// that they telescope to eta_T.
struct RespacedSchedule {
    std::vector<int> steps; // strictly increasing, back() == T
    Vec alpha_eff;          // alpha_eff[k] = eta(steps[k]) - eta(steps[k-1]), eta(steps[-1]) = 0
    NoiseSchedule parent;

    int size() const { return static_cast<int>(steps.size()); }

    static RespacedSchedule make(const NoiseSchedule& sched, int S) {
        if (S < 2 || S > sched.T) throw ConfigError("respace: require 2 <= S <= T");
        RespacedSchedule r;
        r.parent = sched;
        r.steps.resize(S);
        for (int i = 0; i < S; ++i) {
            double pos = 1.0 + double(i) * double(sched.T - 1) / double(S - 1);
            r.steps[i] = static_cast<int>(std::llround(pos));
        }
        r.steps.back() = sched.T;
        r.alpha_eff.resize(S);
        for (int i = 0; i < S; ++i) {
            double prev = i == 0 ? 0.0 : sched.eta_at(r.steps[i - 1]);
            r.alpha_eff[i] = sched.eta_at(r.steps[i]) - prev;
        }
        return r;
    }
};

// State of the reverse chain: current iterate x_t at step t, conditioned on y.
template <class S>
struct DiffusionState {
    VecX<S> x_t;
    int t = 0;
    VecX<S> y;
};

// Denoiser contract: predicts the clean signal from (x_t, y, t).
template <class S>
using Denoiser = std::function<VecX<S>(const VecX<S>&, const VecX<S>&, int)>;

// One forward transition: x_t ~ N(x_prev + alpha_t z, kappa^2 alpha_t I).
template <class S>
VecX<S> forward_step(const VecX<S>& x_prev, const VecX<S>& z, int t,
                     const NoiseSchedule& sched, Rng& rng) {
    const S a = static_cast<S>(sched.alpha[t - 1]);
    const S sd = static_cast<S>(sched.kappa * std::sqrt(sched.alpha[t - 1]));
    VecX<S> out = x_prev + a * z;
    if (sd > S(0)) out += sd * rng.normal_vec<S>(x_prev.size());
    return out;
}

// Closed-form marginal: x_t ~ N(x + eta_t z, kappa^2 eta_t I), z = y - x.
template <class S>
VecX<S> forward_marginal(const VecX<S>& x, const VecX<S>& y, int t,
                         const NoiseSchedule& sched, Rng& rng) {
    const S e = static_cast<S>(sched.eta_at(t));
    const S sd = static_cast<S>(sched.kappa * std::sqrt(sched.eta_at(t)));
    VecX<S> out = x + e * (y - x);
    if (sd > S(0)) out += sd * rng.normal_vec<S>(x.size());
    return out;
}

// Start of the reverse chain, inside an observation-consistent neighborhood:
// x_T = y + kappa sqrt(eta_T) eps.
template <class S>
VecX<S> ocn_init(const VecX<S>& y, const NoiseSchedule& sched, Rng& rng) {
    const S sd = static_cast<S>(sched.kappa * std::sqrt(sched.eta[sched.T - 1]));
    if (sd <= S(0)) return y;
    return y + sd * rng.normal_vec<S>(y.size());
}

// Gaussian posterior q(x_{t_prev} | x_t, x0, y) between selected steps:
//   mean = (eta_prev/eta_t) x_t + (a/eta_t) x0,  a = eta_t - eta_prev,
//   var  = kappa^2 (eta_prev/eta_t) a.
// t_prev = 0 degenerates to (mean = x0, var = 0).
template <class S>
std::pair<VecX<S>, S> posterior_params(const VecX<S>& x_t, const VecX<S>& x0_hat, int t,
                                       int t_prev, const NoiseSchedule& sched) {
    const double eta_t = sched.eta_at(t);
    const double eta_p = sched.eta_at(t_prev);
    if (!(eta_p < eta_t)) throw NumericError("posterior: require eta_prev < eta_t");
    const double a = eta_t - eta_p;
    VecX<S> mean = static_cast<S>(eta_p / eta_t) * x_t + static_cast<S>(a / eta_t) * x0_hat;
    const S var = static_cast<S>(sched.kappa * sched.kappa * (eta_p / eta_t) * a);
    return {std::move(mean), var};
}

// One reverse transition t -> t_prev using the denoiser's clean-signal
// prediction. Deterministic when eta_{t_prev} = 0.
template <class S>
DiffusionState<S> reverse_step(const DiffusionState<S>& state, const Denoiser<S>& denoiser,
                               int t_prev, const NoiseSchedule& sched, Rng& rng) {
    VecX<S> x0 = denoiser(state.x_t, state.y, state.t);
    if (x0.size() != state.x_t.size()) throw NumericError("reverse_step: denoiser length mismatch");
    auto [mean, var] = posterior_params<S>(state.x_t, x0, state.t, t_prev, sched);
    DiffusionState<S> next;
    next.y = state.y;
    next.t = t_prev;
    if (var > S(0))
        next.x_t = mean + std::sqrt(var) * rng.normal_vec<S>(mean.size());
    else
        next.x_t = std::move(mean);
    return next;
}

// Full reverse chain: OCN init then reverse steps over the respaced schedule
// in descending order, ending at eta_0 = 0.
template <class S>
VecX<S> sample(const VecX<S>& y, const Denoiser<S>& denoiser, const RespacedSchedule& respaced,
               Rng& rng) {
    DiffusionState<S> state;
    state.y = y;
    state.t = respaced.steps.back();
    state.x_t = ocn_init<S>(y, respaced.parent, rng);
    for (int k = respaced.size() - 1; k >= 0; --k) {
        int t_prev = k > 0 ? respaced.steps[k - 1] : 0;
        state = reverse_step<S>(state, denoiser, t_prev, respaced.parent, rng);
    }
    return state.x_t;
}

// Training draw for the MSE objective: t uniform on {1..T}, x_t from the
// closed-form marginal; the regression target is the clean x itself.
template <class S>
struct TrainingPair {
    VecX<S> x_t;
    int t;
};

template <class S>
TrainingPair<S> training_pair(const VecX<S>& x, const VecX<S>& y, const NoiseSchedule& sched,
                              Rng& rng) {
    int t = 1 + static_cast<int>(rng.integer(static_cast<std::uint64_t>(sched.T)));
    TrainingPair<S> p{forward_marginal<S>(x, y, t, sched, rng), t};
    return p;
}

} // namespace resdiff::diffusion

#endif
