// Copyright 2026 The flatstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flatstream/search.hpp"

#include <algorithm>
#include <sstream>

#include "flatstream/error.hpp"

namespace flatstream {

std::string_view change_name(ChangeKind change) {
  return change == ChangeKind::kDecrement ? "decrement" : "toggle";
}

std::string quant_label(const LayerQuant& q) {
  if (q.arith == Arith::kNone) return "none";
  return std::string(arith_name(q.arith)) + "-" + std::to_string(q.bits);
}

std::vector<Neighbor> neighborhood(const QuantConfig& q, const std::vector<std::size_t>& active, int bit_floor) {
  std::vector<std::size_t> layers = active;
  std::sort(layers.begin(), layers.end());
  std::vector<Neighbor> out;
  for (std::size_t l : layers) {
    if (l >= q.size() || q[l].arith == Arith::kNone) continue;
    if (q[l].bits > bit_floor) {
      Neighbor n{l, ChangeKind::kDecrement, q};
      --n.q[l].bits;
      out.push_back(std::move(n));
    }
    Neighbor t{l, ChangeKind::kToggle, q};
    t.q[l].arith = q[l].arith == Arith::kShift ? Arith::kFixed : Arith::kShift;
    out.push_back(std::move(t));
  }
  return out;
}

std::uint64_t step_seed(std::uint64_t base, std::size_t iteration) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(iteration) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SearchResult search(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q0,
                    const SearchConfig& cfg, const Dataset& data, const UnrollPlan& plan,
                    const CostCoefficients& coeff) {
  if (data.empty()) fail(ErrorKind::kEmptyDataset, "search dataset has no samples");
  if (cfg.epochs < 0) fail(ErrorKind::kInvalidArgument, "epochs must be nonnegative");
  if (!(cfg.alpha_budget >= 0.0 && cfg.alpha_budget <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "accuracy budget must lie in [0, 1]");
  }
  if (cfg.bit_floor < 2 || cfg.bit_floor > cfg.bit_ceiling) fail(ErrorKind::kInvalidArgument, "bad bit range");
  if (q0.size() != net.layers.size()) fail(ErrorKind::kInconsistentInputs, "q0 does not cover every layer");
  check_plan(net, plan);
  for (std::size_t i = 0; i < q0.size(); ++i) {
    if (net.layers[i].has_weights() &&
        (q0[i].arith == Arith::kNone || q0[i].bits < cfg.bit_floor || q0[i].bits > cfg.bit_ceiling)) {
      fail(ErrorKind::kInconsistentInputs, "q0 layer " + std::to_string(i) + " is outside the search range");
    }
  }

  CostCache cache(coeff);
  auto layer_key = [&](std::size_t l, const LayerQuant& lq) {
    return cost_key(cache.estimate(net.layers[l], lq, plan.layers[l]), coeff);
  };

  SearchResult r;
  r.q = q0;
  r.theta = theta;
  r.trace.alpha_budget = cfg.alpha_budget;
  r.trace.h_budget = cfg.h_budget;
  r.cost = hwcost(net, r.q, plan, coeff, &cache).key;
  r.trace.initial_cost = r.cost;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].has_weights()) active.push_back(i);
  }

  for (std::size_t iteration = 0; !active.empty(); ++iteration) {
    // Reductions are per-layer differences: only the changed layer's cost moves.
    const Neighbor* best = nullptr;
    double best_gain = 0.0;
    const auto candidates = neighborhood(r.q, active, cfg.bit_floor);
    for (const Neighbor& n : candidates) {
      const double gain = layer_key(n.layer, r.q[n.layer]) - layer_key(n.layer, n.q[n.layer]);
      if (gain > best_gain) {
        best_gain = gain;
        best = &n;
      }
    }
    if (!best) break;

    SearchStep step;
    step.layer = best->layer;
    step.change = best->change;
    step.before = r.q[best->layer];
    step.after = best->q[best->layer];
    step.cost_before = r.cost;
    step.cost_after = hwcost(net, best->q, plan, coeff, &cache).key;
    step.seed = step_seed(cfg.seed, iteration);

    FinetuneOptions ft;
    ft.epochs = cfg.epochs;
    ft.learning_rate = cfg.learning_rate;
    ft.batch_size = cfg.batch_size;
    ft.seed = step.seed;
    ft.jobs = cfg.jobs;
    FinetuneResult tuned;
    bool evaluated = true;
    try {
      tuned = finetune_ste(net, r.theta, best->q, data, ft);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kAccumulatorOverflowRisk) throw;
      evaluated = false;
      step.note = "accumulator-overflow-risk";
    }
    if (evaluated) step.alpha = tuned.alpha.top1;
    step.accepted = evaluated && step.alpha >= cfg.alpha_budget;
    const std::size_t changed = best->layer;
    if (step.accepted) {
      r.q = best->q;
      r.theta = std::move(tuned.params);
      r.cost = step.cost_after;
    } else {
      active.erase(std::find(active.begin(), active.end(), changed));
    }
    r.trace.steps.push_back(std::move(step));
    if (r.trace.steps.back().accepted && r.cost <= cfg.h_budget) {
      r.trace.early_exit = true;
      break;
    }
  }
  return r;
}

std::string format_trace(const SearchTrace& t) {
  std::ostringstream os;
  os.precision(10);
  os << "# alpha_budget " << t.alpha_budget << "\n";
  os << "# h_budget " << t.h_budget << "\n";
  os << "# initial_cost " << t.initial_cost << "\n";
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const SearchStep& s = t.steps[i];
    os << "step " << i << " layer " << s.layer << " " << change_name(s.change) << " " << quant_label(s.before)
       << " -> " << quant_label(s.after) << " alpha " << s.alpha << " cost " << s.cost_before << " -> "
       << s.cost_after << " seed " << s.seed << " " << (s.accepted ? "accepted" : "rejected");
    if (!s.note.empty()) os << " " << s.note;
    os << "\n";
  }
  os << "# early_exit " << (t.early_exit ? "yes" : "no") << "\n";
  return os.str();
}

}  // namespace flatstream
