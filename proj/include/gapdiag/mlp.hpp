#pragma once

// Small fully connected classifier (ReLU hidden layers, 2-way softmax output)
// trained full-batch with Adam on a cross-entropy loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gapdiag/error.hpp"
#include "gapdiag/linalg.hpp"
#include "gapdiag/logistic.hpp"
#include "gapdiag/rng.hpp"

namespace gapdiag {

struct MlpOptions {
    std::vector<int> hidden{256};
    double dropout = 0.0;  // applied after every hidden ReLU during training
    int epochs = 100;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

struct DenseLayer {
    Mat W;  // out x in
    Vec b;
};

class Mlp {
public:
    std::vector<DenseLayer> layers;
    Standardizer scaler;
    MlpOptions options;
    std::vector<double> loss_history;

    // y holds 0/1 labels; inputs are z-scored on X.
    static Mlp train(const Mat& X, const std::vector<int>& y, const MlpOptions& opt) {
        if (static_cast<std::size_t>(X.rows()) != y.size()) fail(ErrorKind::Shape, "label count != row count");
        const auto pos = std::count(y.begin(), y.end(), 1);
        if (pos == 0 || pos == static_cast<long>(y.size())) fail(ErrorKind::DegenerateLabels, "labels contain a single class");
        if (opt.dropout < 0 || opt.dropout >= 1) fail(ErrorKind::Config, "dropout must be in [0, 1)");

        Mlp m;
        m.options = opt;
        m.scaler = Standardizer::fit(X);
        const Mat Z = m.scaler.transform(X);

        Stream init(opt.seed, {0x1A17});
        std::vector<int> widths{static_cast<int>(X.cols())};
        widths.insert(widths.end(), opt.hidden.begin(), opt.hidden.end());
        widths.push_back(2);
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
            DenseLayer L{Mat(widths[i + 1], widths[i]), Vec(widths[i + 1])};
            for (Eigen::Index r = 0; r < L.W.rows(); ++r)
                for (Eigen::Index c = 0; c < L.W.cols(); ++c) L.W(r, c) = init.uniform(-bound, bound);
            for (Eigen::Index r = 0; r < L.b.size(); ++r) L.b(r) = init.uniform(-bound, bound);
            m.layers.push_back(std::move(L));
        }

        Mat Y = Mat::Zero(Z.rows(), 2);
        for (std::size_t i = 0; i < y.size(); ++i) Y(static_cast<Eigen::Index>(i), y[i] ? 1 : 0) = 1.0;

        std::vector<DenseLayer> mom, vel;
        for (const auto& L : m.layers) {
            mom.push_back({Mat::Zero(L.W.rows(), L.W.cols()), Vec::Zero(L.b.size())});
            vel.push_back(mom.back());
        }
        Stream drop(opt.seed, {0xD20F});
        const double n = static_cast<double>(Z.rows());
        for (int ep = 1; ep <= opt.epochs; ++ep) {
            // forward, keeping post-activation outputs and dropout masks
            std::vector<Mat> acts{Z};
            std::vector<Mat> masks;
            for (std::size_t li = 0; li < m.layers.size(); ++li) {
                Mat a = (acts.back() * m.layers[li].W.transpose()).rowwise() + m.layers[li].b.transpose();
                if (li + 1 < m.layers.size()) {
                    a = a.cwiseMax(0.0);
                    Mat mask = Mat::Ones(a.rows(), a.cols());
                    if (opt.dropout > 0) {
                        const double keep = 1.0 - opt.dropout;
                        for (Eigen::Index r = 0; r < a.rows(); ++r)
                            for (Eigen::Index c = 0; c < a.cols(); ++c) mask(r, c) = drop.uniform() < keep ? 1.0 / keep : 0.0;
                        a = a.cwiseProduct(mask);
                    }
                    masks.push_back(std::move(mask));
                }
                acts.push_back(std::move(a));
            }
            Mat P = softmax_rows(acts.back());
            double loss = 0.0;
            for (Eigen::Index r = 0; r < P.rows(); ++r) loss -= std::log(std::max(P(r, y[static_cast<std::size_t>(r)] ? 1 : 0), 1e-300));
            m.loss_history.push_back(loss / n);

            Mat delta = (P - Y) / n;
            const double bc1 = 1.0 - std::pow(opt.beta1, ep);
            const double bc2 = 1.0 - std::pow(opt.beta2, ep);
            for (std::size_t li = m.layers.size(); li-- > 0;) {
                const Mat gW = delta.transpose() * acts[li];
                const Vec gb = delta.colwise().sum().transpose();
                if (li > 0) {
                    delta = (delta * m.layers[li].W).cwiseProduct(masks[li - 1]);
                    delta = delta.array() * (acts[li].array() > 0.0).cast<double>();
                }
                auto step = [&](auto& param, auto& mo, auto& ve, const auto& g) {
                    mo = opt.beta1 * mo + (1 - opt.beta1) * g;
                    ve = opt.beta2 * ve + (1 - opt.beta2) * g.cwiseProduct(g);
                    param.array() -= opt.lr * (mo.array() / bc1) / ((ve.array() / bc2).sqrt() + opt.adam_eps);
                };
                step(m.layers[li].W, mom[li].W, vel[li].W, gW);
                step(m.layers[li].b, mom[li].b, vel[li].b, gb);
            }
        }
        return m;
    }

    // Probability of class 1 for each row of raw (unscaled) X.
    Vec predict_proba(const Mat& X) const {
        Mat a = scaler.transform(X);
        for (std::size_t li = 0; li < layers.size(); ++li) {
            a = (a * layers[li].W.transpose()).rowwise() + layers[li].b.transpose();
            if (li + 1 < layers.size()) a = a.cwiseMax(0.0);
        }
        return softmax_rows(a).col(1);
    }

    static Mat softmax_rows(const Mat& z) {
        Mat p(z.rows(), z.cols());
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            const double mx = z.row(r).maxCoeff();
            p.row(r) = (z.row(r).array() - mx).exp();
            p.row(r) /= p.row(r).sum();
        }
        return p;
    }
};

}  // namespace gapdiag
