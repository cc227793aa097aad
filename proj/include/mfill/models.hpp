#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "mfill/core.hpp"

namespace mfill {

inline constexpr double kTwoPi = 6.283185307179586477;

// ---------------------------------------------------------------------------
// Torus surface
// ---------------------------------------------------------------------------

/// Standard torus parametrization on [0, 2pi]^2: major radius R (center of
/// the tube to the center of the ring), minor radius r (tube radius).
struct TorusModel {
    double major_radius = 1.0;
    double minor_radius = 0.9;

    TorusModel(double big_r, double small_r) : major_radius(big_r), minor_radius(small_r) {
        if (!(small_r > 0.0 && small_r < big_r))
            throw ConfigError("TorusModel: requires 0 < r < R");
    }

    std::array<double, 3> eval(double theta, double psi) const {
        const double ring = major_radius + minor_radius * std::cos(theta);
        return {ring * std::cos(psi), ring * std::sin(psi), minor_radius * std::sin(theta)};
    }

    /// J_2 f = r (R + r cos theta).
    double jacobian(double theta, double /*psi*/) const {
        return minor_radius * (major_radius + minor_radius * std::cos(theta));
    }

    Matrix differential(double theta, double psi) const {
        const double ring = major_radius + minor_radius * std::cos(theta);
        Matrix df(3, 2);
        df(0, 0) = -minor_radius * std::sin(theta) * std::cos(psi);
        df(0, 1) = -ring * std::sin(psi);
        df(1, 0) = -minor_radius * std::sin(theta) * std::sin(psi);
        df(1, 1) = ring * std::cos(psi);
        df(2, 0) = minor_radius * std::cos(theta);
        df(2, 1) = 0.0;
        return df;
    }

    ParamBox box() const { return ParamBox({0.0, 0.0}, {kTwoPi, kTwoPi}); }

    ModelSpec spec() const {
        ModelSpec s;
        s.dim_in = 2;
        s.dim_out = 3;
        const TorusModel self = *this;
        s.eval = [self](std::span<const double> x) {
            const auto y = self.eval(x[0], x[1]);
            return std::vector<double>(y.begin(), y.end());
        };
        s.differential = [self](std::span<const double> x) {
            return self.differential(x[0], x[1]);
        };
        s.jacobian = [self](std::span<const double> x) { return self.jacobian(x[0], x[1]); };
        return s;
    }
};

// ---------------------------------------------------------------------------
// Sum-of-exponentials model
// ---------------------------------------------------------------------------

/// f(theta, psi) = (e^{-theta t_i} + e^{-psi t_i})_{i=1..3} on [0,100]^2.
/// Symmetric under swapping the two arguments; its image collapses to a
/// 1-D edge on the diagonal where the Jacobian vanishes.
struct ExponentialModel {
    std::array<double, 3> times{1.0, 2.0, 4.0};

    explicit ExponentialModel(std::array<double, 3> t = {1.0, 2.0, 4.0}) : times(t) {
        if (!(t[0] > 0.0 && t[0] < t[1] && t[1] < t[2]))
            throw ConfigError("ExponentialModel: requires 0 < t1 < t2 < t3");
    }

    std::array<double, 3> eval(double theta, double psi) const {
        return {std::exp(-theta * times[0]) + std::exp(-psi * times[0]),
                std::exp(-theta * times[1]) + std::exp(-psi * times[1]),
                std::exp(-theta * times[2]) + std::exp(-psi * times[2])};
    }

    Matrix differential(double theta, double psi) const {
        Matrix df(3, 2);
        for (int i = 0; i < 3; ++i) {
            df(i, 0) = -times[i] * std::exp(-theta * times[i]);
            df(i, 1) = -times[i] * std::exp(-psi * times[i]);
        }
        return df;
    }

    /// J_2 f = sqrt(sum over pairs i<j of the squared 2x2 minors of Df),
    /// with each minor
    ///   t_i t_j (e^{-theta t_i - psi t_j} - e^{-psi t_i - theta t_j}).
    /// Evaluated in log space: the raw exponentials underflow (and their
    /// squared-difference factor can overflow) over most of the box, while
    /// the Jacobian itself stays representable.
    double jacobian(double theta, double psi) const {
        double max_log = -std::numeric_limits<double>::infinity();
        std::array<double, 3> logs{};
        int count = 0;
        for (int i = 0; i < 3; ++i) {
            for (int j = i + 1; j < 3; ++j) {
                const double ea = -theta * times[i] - psi * times[j];
                const double eb = -psi * times[i] - theta * times[j];
                const double hi = std::max(ea, eb);
                const double gap = hi - std::min(ea, eb);
                if (gap == 0.0) continue;  // coincident exponents: minor is 0
                // log of the squared minor
                const double log_term = 2.0 * std::log(times[i] * times[j]) + 2.0 * hi +
                                        2.0 * std::log1p(-std::exp(-gap));
                logs[count++] = log_term;
                max_log = std::max(max_log, log_term);
            }
        }
        if (count == 0) return 0.0;  // exactly on the diagonal
        double acc = 0.0;
        for (int c = 0; c < count; ++c) acc += std::exp(logs[c] - max_log);
        return std::exp(0.5 * (max_log + std::log(acc)));
    }

    ParamBox box() const { return ParamBox({0.0, 0.0}, {100.0, 100.0}); }

    ModelSpec spec() const {
        ModelSpec s;
        s.dim_in = 2;
        s.dim_out = 3;
        const ExponentialModel self = *this;
        s.eval = [self](std::span<const double> x) {
            const auto y = self.eval(x[0], x[1]);
            return std::vector<double>(y.begin(), y.end());
        };
        s.differential = [self](std::span<const double> x) {
            return self.differential(x[0], x[1]);
        };
        s.jacobian = [self](std::span<const double> x) { return self.jacobian(x[0], x[1]); };
        return s;
    }
};

// ---------------------------------------------------------------------------
// Explicit adaptive Runge-Kutta 5(4), Dormand-Prince coefficients
// ---------------------------------------------------------------------------

struct Rk45Settings {
    double abs_tol = 1e-9;
    double rel_tol = 1e-7;
    double initial_step = 1e-3;
    double max_step = 1.0;
};

namespace detail {

/// Integrate y' = rhs(t, y) from t0 to t_end. The observer is called after
/// every accepted step with (t0, t1, y0, y1, f0, f1); returning false stops
/// the integration early. Dense output between accepted steps is the
/// caller's business (cubic Hermite on the reported endpoint data).
template <typename Rhs, typename Observer>
inline double rk45_integrate(Rhs&& rhs, std::vector<double>& y, double t0, double t_end,
                             const Rk45Settings& s, Observer&& observer) {
    const std::size_t dim = y.size();
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
    std::vector<double> tmp(dim), y_new(dim), y_old(dim);

    double t = t0;
    double h = std::min(s.initial_step, s.max_step);
    rhs(t, y, k1);
    int consecutive_rejects = 0;

    while (t < t_end) {
        h = std::min(h, t_end - t);

        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * (0.2 * k1[i]);
        rhs(t + 0.2 * h, tmp, k2);
        for (std::size_t i = 0; i < dim; ++i)
            tmp[i] = y[i] + h * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i]);
        rhs(t + 0.3 * h, tmp, k3);
        for (std::size_t i = 0; i < dim; ++i)
            tmp[i] = y[i] + h * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i] + 32.0 / 9.0 * k3[i]);
        rhs(t + 0.8 * h, tmp, k4);
        for (std::size_t i = 0; i < dim; ++i)
            tmp[i] = y[i] + h * (19372.0 / 6561.0 * k1[i] - 25360.0 / 2187.0 * k2[i] +
                                 64448.0 / 6561.0 * k3[i] - 212.0 / 729.0 * k4[i]);
        rhs(t + 8.0 / 9.0 * h, tmp, k5);
        for (std::size_t i = 0; i < dim; ++i)
            tmp[i] = y[i] + h * (9017.0 / 3168.0 * k1[i] - 355.0 / 33.0 * k2[i] +
                                 46732.0 / 5247.0 * k3[i] + 49.0 / 176.0 * k4[i] -
                                 5103.0 / 18656.0 * k5[i]);
        rhs(t + h, tmp, k6);
        for (std::size_t i = 0; i < dim; ++i)
            y_new[i] = y[i] + h * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i] +
                                   125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i] +
                                   11.0 / 84.0 * k6[i]);
        rhs(t + h, y_new, k7);

        double err_norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double err = h * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i] +
                                    71.0 / 1920.0 * k4[i] - 17253.0 / 339200.0 * k5[i] +
                                    22.0 / 525.0 * k6[i] - 1.0 / 40.0 * k7[i]);
            const double scale = s.abs_tol + s.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
            err_norm += (err / scale) * (err / scale);
        }
        err_norm = std::sqrt(err_norm / static_cast<double>(dim));

        if (err_norm <= 1.0) {
            consecutive_rejects = 0;
            y_old = y;
            y = y_new;
            const double t_new = t + h;
            if (!observer(t, t_new, y_old, y, k1, k7)) return t_new;
            t = t_new;
            k1 = k7;  // first-same-as-last
            const double factor = err_norm == 0.0
                                      ? 5.0
                                      : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
            h = std::min(h * factor, s.max_step);
        } else {
            if (++consecutive_rejects > 64)
                throw Error("rk45: step control failed to produce an acceptable step");
            h *= std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 0.9);
        }
    }
    return t;
}

/// Interior critical points of the cubic Hermite interpolant of one state
/// component over an accepted step; used to refine extrema between steps.
inline void hermite_extrema(double y0, double y1, double f0, double f1, double h,
                            std::array<double, 2>& thetas, int& count) {
    // d/dtheta H(theta) = A theta^2 + B theta + C with:
    const double a = 6.0 * (y0 - y1) + 3.0 * h * (f0 + f1);
    const double b = -6.0 * (y0 - y1) - 2.0 * h * (2.0 * f0 + f1);
    const double c = h * f0;
    count = 0;
    if (a == 0.0) {
        if (b != 0.0) {
            const double th = -c / b;
            if (th > 0.0 && th < 1.0) thetas[count++] = th;
        }
        return;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    for (const double th : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
        if (th > 0.0 && th < 1.0) thetas[count++] = th;
}

inline double hermite_value(double y0, double y1, double f0, double f1, double h, double th) {
    const double th2 = th * th, th3 = th2 * th;
    return (2.0 * th3 - 3.0 * th2 + 1.0) * y0 + (th3 - 2.0 * th2 + th) * h * f0 +
           (-2.0 * th3 + 3.0 * th2) * y1 + (th3 - th2) * h * f1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Michaelis-Menten enzyme network (three species, one input)
// ---------------------------------------------------------------------------

/// Three-enzyme regulatory network under Michaelis-Menten kinetics. The two
/// free parameters are exponents: u in the unit square maps to rates through
/// k = 10^(2u-1). The model output is the (sensitivity, precision) pair of
/// the adaptation response to a step (input_base -> input_step) in the input
/// level.
struct EnzymeModel {
    // fixed rate and Michaelis constants
    double kp_faa = 7.0437;
    double kp_fbb = 0.1364;
    double k_ac = 3.0061;
    double kp_bc = 0.8395;
    double cap_k_ia = 0.0183;
    double cap_kp_faa = 0.0016;
    double cap_k_cb = 0.0122;
    double cap_kp_fbb = 0.0032;
    double cap_k_ac = 0.0044;
    double cap_kp_bc = 0.0742;
    // experiment constants, recorded in every run manifest
    double input_base = 0.5;   // I0
    double input_step = 0.6;   // I1
    double feed_a = 0.5;       // F_A
    double feed_b = 0.5;       // F_B
    Rk45Settings integrator{};

    double steady_tol = 1e-6;     // sup-norm bound on the right-hand side
    double steady_window = 10.0;  // time the bound must hold
    double time_cap = 1000.0;

    EnzymeModel() = default;

    void validate() const {
        if (input_base == input_step)
            throw ConfigError("EnzymeModel: input levels must differ (zero-stimulus guard)");
        if (!(input_base > 0.0)) throw ConfigError("EnzymeModel: I0 must be positive");
    }

    struct Output {
        double sensitivity = 0.0;
        double precision = 0.0;
        bool steady = true;        // both phases reached steady state before the cap
        double baseline = 0.0;     // C0
        double peak = 0.0;         // C_peak
        double final_level = 0.0;  // C1
    };

    void rhs(double input, std::span<const double> state, std::span<double> out,
             double k_ia, double k_cb) const {
        const double a = state[0], b = state[1], c = state[2];
        out[0] = k_ia * input * (1.0 - a) / ((1.0 - a) + cap_k_ia) -
                 feed_a * kp_faa * a / (a + cap_kp_faa);
        out[1] = c * k_cb * (1.0 - b) / ((1.0 - b) + cap_k_cb) -
                 feed_b * kp_fbb * b / (b + cap_kp_fbb);
        out[2] = a * k_ac * (1.0 - c) / ((1.0 - c) + cap_k_ac) -
                 b * kp_bc * c / (c + cap_kp_bc);
    }

    /// Integrate at fixed input until ||dState/dt||_inf stays below
    /// steady_tol for steady_window time units. The derivative is measured as
    /// secants between trajectory checkpoints ~0.5 time units apart: the fast
    /// compartment makes the system mildly stiff, so the pointwise right-hand
    /// side at accepted steps carries tolerance-level jitter amplified by the
    /// fast rate, while checkpoint secants average it away and still catch
    /// any real transient. Optionally tracks the running maximum of C with
    /// Hermite refinement at interior critical points. Returns false if the
    /// time cap was reached first.
    bool integrate_to_steady(std::vector<double>& state, double input, double k_ia, double k_cb,
                             double* track_peak) const {
        auto f = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
            rhs(input, y, dy, k_ia, k_cb);
        };
        constexpr double checkpoint_spacing = 0.5;
        struct Checkpoint {
            double t;
            std::array<double, 3> y;
        };
        std::vector<Checkpoint> window;
        window.push_back({0.0, {state[0], state[1], state[2]}});
        double next_checkpoint = checkpoint_spacing;
        bool reached = false;
        detail::rk45_integrate(
            f, state, 0.0, time_cap, integrator,
            [&](double t0, double t1, const std::vector<double>& y0,
                const std::vector<double>& y1, const std::vector<double>& f0,
                const std::vector<double>& f1) {
                if (track_peak) {
                    *track_peak = std::max(*track_peak, y1[2]);
                    std::array<double, 2> thetas;
                    int count = 0;
                    detail::hermite_extrema(y0[2], y1[2], f0[2], f1[2], t1 - t0, thetas, count);
                    for (int c = 0; c < count; ++c)
                        *track_peak = std::max(
                            *track_peak,
                            detail::hermite_value(y0[2], y1[2], f0[2], f1[2], t1 - t0, thetas[c]));
                }
                if (t1 < next_checkpoint) return true;
                next_checkpoint += checkpoint_spacing;
                window.push_back({t1, {y1[0], y1[1], y1[2]}});
                while (window.size() > 2 &&
                       window.back().t - window[1].t >= steady_window + checkpoint_spacing)
                    window.erase(window.begin());
                if (window.back().t - window.front().t < steady_window) return true;
                for (std::size_t i = 1; i < window.size(); ++i) {
                    const double dt = window[i].t - window[i - 1].t;
                    for (int c = 0; c < 3; ++c)
                        if (std::abs(window[i].y[c] - window[i - 1].y[c]) >= steady_tol * dt)
                            return true;  // still moving
                }
                reached = true;
                return false;
            });
        return reached;
    }

    Output eval_detail(double u1, double u2) const {
        validate();
        const double k_ia = std::pow(10.0, 2.0 * u1 - 1.0);
        const double k_cb = std::pow(10.0, 2.0 * u2 - 1.0);
        Output out;

        std::vector<double> state{0.0, 0.0, 0.0};
        const bool steady0 = integrate_to_steady(state, input_base, k_ia, k_cb, nullptr);
        out.baseline = state[2];

        double peak = state[2];
        const bool steady1 = integrate_to_steady(state, input_step, k_ia, k_cb, &peak);
        out.final_level = state[2];
        out.peak = std::max(peak, out.final_level);
        out.steady = steady0 && steady1;

        const double rel_input = (input_step - input_base) / input_base;
        out.sensitivity = std::abs(((out.peak - out.baseline) / out.baseline) / rel_input);
        out.precision = std::abs(rel_input / ((out.final_level - out.baseline) / out.baseline));
        return out;
    }

    /// Strict single-point evaluation: errors out when either phase fails to
    /// reach steady state before the time cap.
    std::array<double, 2> eval(double u1, double u2) const {
        const Output out = eval_detail(u1, u2);
        if (!out.steady)
            throw NoSteadyState("enzyme_eval: time cap reached before steady state");
        return {out.sensitivity, out.precision};
    }

    ParamBox box() const { return ParamBox({0.35, 0.0}, {0.88, 1.0}); }

    /// Engine-facing model. Evaluation never throws on a missed steady state;
    /// the point is reported with its best-effort values and the miss is
    /// counted (see non_steady_count), leaving exclusion to the target
    /// density as the sampling scheme expects.
    ModelSpec spec() const {
        validate();
        auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
        non_steady_counter_ = counter;
        ModelSpec s;
        s.dim_in = 2;
        s.dim_out = 2;
        const EnzymeModel self = *this;
        s.eval = [self, counter](std::span<const double> x) {
            const Output out = self.eval_detail(x[0], x[1]);
            if (!out.steady) counter->fetch_add(1, std::memory_order_relaxed);
            return std::vector<double>{out.sensitivity, out.precision};
        };
        return s;
    }

    std::uint64_t non_steady_count() const {
        auto c = non_steady_counter_.lock();
        return c ? c->load(std::memory_order_relaxed) : 0;
    }

private:
    mutable std::weak_ptr<std::atomic<std::uint64_t>> non_steady_counter_;
};

} // namespace mfill
