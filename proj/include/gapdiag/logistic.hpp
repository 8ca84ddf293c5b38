#pragma once

// L2-regularized binary logistic regression fitted with L-BFGS, plus the
// per-feature standardizer every probe in the toolkit uses.

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "gapdiag/error.hpp"
#include "gapdiag/linalg.hpp"

namespace gapdiag {

struct Standardizer {
    Vec mean;
    Vec std;  // strictly positive; zero-variance columns are clamped to 1

    static Standardizer fit(const Mat& X) {
        Standardizer s;
        const auto n = static_cast<double>(X.rows());
        s.mean = X.colwise().mean().transpose();
        s.std.resize(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double var = (X.col(j).array() - s.mean(j)).square().sum() / n;
            const double sd = std::sqrt(var);
            s.std(j) = sd <= 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? 1.0 : sd;
        }
        return s;
    }

    Mat transform(const Mat& X) const {
        return (X.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
    }
    Vec transform_row(const Vec& x) const { return (x - mean).cwiseQuotient(std); }
};

struct LogisticOptions {
    double reg_C = 1.0;
    int max_iter = 1000;
    double grad_tol = 1e-4;  // on the infinity norm of the gradient
    int history = 10;
};

struct LogisticFit {
    Vec w;
    double b = 0.0;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
};

namespace detail {

inline double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
inline double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// objective (1/(2C))|w|^2 + sum_i log(1 + exp(-y_i (w.x_i + b))), y in {-1,+1};
// theta = [w; b], the intercept is not penalized.
inline double logistic_objective(const Mat& X, const Vec& ypm, double C, const Vec& theta, Vec& grad) {
    const Eigen::Index d = X.cols();
    const auto w = theta.head(d);
    const double b = theta(d);
    const Vec margin = ((X * w).array() + b).matrix();
    double f = 0.5 / C * w.squaredNorm();
    Vec coef(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double t = ypm(i) * margin(i);
        f += softplus(-t);
        coef(i) = -ypm(i) * sigmoid(-t);
    }
    grad.resize(d + 1);
    grad.head(d) = X.transpose() * coef + w / C;
    grad(d) = coef.sum();
    return f;
}

}  // namespace detail

// y holds 0/1 labels.
inline LogisticFit fit_logistic(const Mat& X, const std::vector<int>& y, const LogisticOptions& opt = {}) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) fail(ErrorKind::Shape, "label count != row count");
    const auto n_pos = std::count(y.begin(), y.end(), 1);
    if (n_pos == 0 || n_pos == static_cast<long>(y.size())) fail(ErrorKind::DegenerateLabels, "labels contain a single class");
    if (!(opt.reg_C > 0)) fail(ErrorKind::Config, "reg_C must be positive");

    Vec ypm(X.rows());
    for (std::size_t i = 0; i < y.size(); ++i) ypm(static_cast<Eigen::Index>(i)) = y[i] ? 1.0 : -1.0;

    const Eigen::Index dim = X.cols() + 1;
    Vec theta = Vec::Zero(dim);
    Vec g;
    double f = detail::logistic_objective(X, ypm, opt.reg_C, theta, g);

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;
    LogisticFit fit;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
            fit.converged = true;
            break;
        }
        // two-loop recursion
        Vec q = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        Vec dir = gamma * q;
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(dir);
            dir += s_hist[k] * (alpha[k] - beta);
        }
        dir = -dir;
        double dg = g.dot(dir);
        if (dg >= 0) {  // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -g;
            dg = -g.squaredNorm();
        }

        double step = s_hist.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
        Vec theta_new, g_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            theta_new = theta + step * dir;
            f_new = detail::logistic_objective(X, ypm, opt.reg_C, theta_new, g_new);
            if (f_new <= f + 1e-4 * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Vec s = theta_new - theta;
        Vec yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * yv.squaredNorm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta = std::move(theta_new);
        g = std::move(g_new);
        f = f_new;
    }
    if (!fit.converged && g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) fit.converged = true;
    fit.w = theta.head(X.cols());
    fit.b = theta(X.cols());
    fit.iterations = it;
    fit.objective = f;
    return fit;
}

// Standardize on X, fit, and predict in one object.
struct LogisticModel {
    Standardizer scaler;
    LogisticFit fit;
    double reg_C = 1.0;

    static LogisticModel train(const Mat& X, const std::vector<int>& y, const LogisticOptions& opt = {}) {
        LogisticModel m;
        m.reg_C = opt.reg_C;
        m.scaler = Standardizer::fit(X);
        m.fit = fit_logistic(m.scaler.transform(X), y, opt);
        return m;
    }

    Vec decision(const Mat& X) const { return (scaler.transform(X) * fit.w).array() + fit.b; }

    Vec predict_proba(const Mat& X) const {
        Vec m = decision(X);
        for (auto& v : m) v = detail::sigmoid(v);
        return m;
    }

    std::vector<int> predict(const Mat& X) const {
        const Vec m = decision(X);
        std::vector<int> out(static_cast<std::size_t>(m.size()));
        for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m(i) > 0.0 ? 1 : 0;
        return out;
    }

    // Weight vector expressed on the raw (unstandardized) features.
    Vec raw_weights() const { return fit.w.cwiseQuotient(scaler.std); }
};

}  // namespace gapdiag
