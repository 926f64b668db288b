// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "reduet/graph.hpp"

namespace rd {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
};

// Central-difference check of d(loss)/d(param) in double precision.
// build must construct the loss from bound parameters alone (all other
// inputs baked in as constants) and be deterministic. Checks up to
// samples_per_entry randomly chosen elements of every entry.
inline GradCheckReport gradcheck(
    ParamStore<double>& store,
    const std::function<int(Graph<double>&, const BoundParams<double>&)>& build,
    int samples_per_entry, Rng& rng, double eps = 1e-5) {
  store.zero_grads();
  {
    Graph<double> g;
    BoundParams<double> bound = bind_params(g, store, true);
    const int loss = build(g, bound);
    g.backward(loss);
    collect_grads(g, bound, store);
  }

  GradCheckReport rep;
  for (int e = 0; e < store.count(); ++e) {
    auto& entry = store.entry(e);
    const Index n = entry.value.size();
    const int samples = static_cast<int>(std::min<Index>(n, samples_per_entry));
    for (int s = 0; s < samples; ++s) {
      const Index idx = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      const double orig = entry.value(idx);

      entry.value(idx) = orig + eps;
      double lp;
      {
        Graph<double> g;
        BoundParams<double> bound = bind_params(g, store, false);
        lp = g.val(build(g, bound))(0, 0);
      }
      entry.value(idx) = orig - eps;
      double lm;
      {
        Graph<double> g;
        BoundParams<double> bound = bind_params(g, store, false);
        lm = g.val(build(g, bound))(0, 0);
      }
      entry.value(idx) = orig;

      const double fd = (lp - lm) / (2.0 * eps);
      const double an = entry.grad.size() != 0 ? entry.grad(idx) : 0.0;
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = entry.name;
      }
    }
  }
  return rep;
}

}  // namespace rd
