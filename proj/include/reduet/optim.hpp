// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "reduet/graph.hpp"

namespace rd {

enum class OptKind { AdamW, Lion };

inline OptKind opt_kind_from_string(const std::string& s) {
  if (s == "adamw") return OptKind::AdamW;
  if (s == "lion") return OptKind::Lion;
  throw InvalidArgument("unknown optimizer: " + s);
}

struct OptConfig {
  OptKind kind = OptKind::AdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient norm cap, 0 disables
};

// AdamW and Lion, both with decoupled weight decay applied directly to
// the parameters.
template <typename S>
class Optimizer {
 public:
  Optimizer(const OptConfig& cfg, const ParamStore<S>& store) : cfg_(cfg) {
    m_.resize(static_cast<std::size_t>(store.count()));
    v_.resize(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
      const auto& e = store.entry(i);
      m_[static_cast<std::size_t>(i)] = Mat<S>::Zero(e.value.rows(), e.value.cols());
      if (cfg_.kind == OptKind::AdamW)
        v_[static_cast<std::size_t>(i)] = Mat<S>::Zero(e.value.rows(), e.value.cols());
    }
  }

  double lr() const { return cfg_.lr; }
  void scale_lr(double factor) { cfg_.lr *= factor; }

  // uses and consumes the gradients accumulated on the store
  void step(ParamStore<S>& store) {
    require(static_cast<int>(m_.size()) == store.count(), "optimizer: store size changed");
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (int i = 0; i < store.count(); ++i) {
        const auto& gr = store.entry(i).grad;
        if (gr.size() != 0) sq += static_cast<double>(gr.template cast<double>().squaredNorm());
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const S lr = static_cast<S>(cfg_.lr);
    const S wd = static_cast<S>(cfg_.weight_decay);
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    for (int i = 0; i < store.count(); ++i) {
      auto& e = store.entry(i);
      Mat<S> g = e.grad.size() != 0 ? Mat<S>(e.grad * static_cast<S>(clip_scale))
                                    : Mat<S>::Zero(e.value.rows(), e.value.cols());
      auto& m = m_[static_cast<std::size_t>(i)];
      if (cfg_.kind == OptKind::AdamW) {
        auto& v = v_[static_cast<std::size_t>(i)];
        m = b1 * m + (S(1) - b1) * g;
        v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
        const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(b1), t_));
        const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(b2), t_));
        Mat<S> update =
            ((m.array() / bc1) / ((v.array() / bc2).sqrt() + static_cast<S>(cfg_.eps))).matrix();
        e.value -= lr * (update + wd * e.value);
      } else {
        Mat<S> c = b1 * m + (S(1) - b1) * g;
        Mat<S> u(c.rows(), c.cols());
        for (Index k = 0; k < c.size(); ++k)
          u(k) = c(k) > S(0) ? S(1) : (c(k) < S(0) ? S(-1) : S(0));
        e.value -= lr * (u + wd * e.value);
        m = b2 * m + (S(1) - b2) * g;
      }
    }
    store.zero_grads();
  }

 private:
  OptConfig cfg_;
  int t_ = 0;
  std::vector<Mat<S>> m_;
  std::vector<Mat<S>> v_;
};

}  // namespace rd
