// Copyright 2026 The dptab Authors
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

#include <algorithm>
#include <cmath>
#include <limits>

#include "dptab/sampler.hpp"

namespace dptab {
namespace {

using Cells = std::vector<std::array<std::size_t, 2>>;

constexpr std::size_t kExactLimit = 4096;

struct Problem {
  GroupLabelCounts base;  // expected uncontrolled counts
  std::size_t m = 0;

  double gap(const Cells& x) const {
    GroupLabelCounts c = base;
    for (std::size_t a = 0; a < c.size(); ++a) {
      c[a][0] += static_cast<double>(x[a][0]);
      c[a][1] += static_cast<double>(x[a][1]);
    }
    return demographic_parity_gap(c);
  }
};

std::size_t total(const Cells& x) {
  std::size_t t = 0;
  for (const auto& c : x) t += c[0] + c[1];
  return t;
}

void water_fill(const Problem& p, Cells& x) {
  const std::size_t cells = x.size() * 2;
  for (std::size_t k = total(x); k < p.m; ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pick = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      ++x[c / 2][c % 2];
      const double g = p.gap(x);
      --x[c / 2][c % 2];
      if (g < best - 1e-15) {
        best = g;
        pick = c;
      }
    }
    ++x[pick / 2][pick % 2];
  }
}

// Moves of `step` units between two cells, largest steps first.
void local_search(const Problem& p, Cells& x) {
  const std::size_t cells = x.size() * 2;
  std::size_t step = 1;
  while (step * 2 <= p.m) step *= 2;
  double current = p.gap(x);
  for (; step >= 1; step /= 2) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t from = 0; from < cells; ++from) {
        if (x[from / 2][from % 2] < step) continue;
        for (std::size_t to = 0; to < cells; ++to) {
          if (to == from) continue;
          x[from / 2][from % 2] -= step;
          x[to / 2][to % 2] += step;
          const double g = p.gap(x);
          if (g < current - 1e-15) {
            current = g;
            improved = true;
            if (x[from / 2][from % 2] < step) break;
          } else {
            x[to / 2][to % 2] -= step;
            x[from / 2][from % 2] += step;
          }
        }
      }
    }
  }
}

Cells proportional(const Cells& reference, std::size_t m) {
  std::size_t r_total = total(reference);
  Cells x(reference.size(), {0, 0});
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t used = 0;
  for (std::size_t c = 0; c < reference.size() * 2; ++c) {
    const double share = static_cast<double>(m) * static_cast<double>(reference[c / 2][c % 2]) /
                         static_cast<double>(r_total);
    const auto whole = static_cast<std::size_t>(std::floor(share));
    x[c / 2][c % 2] = whole;
    used += whole;
    remainder.emplace_back(-(share - static_cast<double>(whole)), c);
  }
  std::sort(remainder.begin(), remainder.end());
  for (std::size_t i = 0; used < m; ++i, ++used) {
    const std::size_t c = remainder[i % remainder.size()].second;
    ++x[c / 2][c % 2];
  }
  return x;
}

// Two groups: for every split (m0, y0) the best y1 is a rounding of the
// count that equalizes the rates, so the search is exact in O(m^2).
void exact_two_groups(const Problem& p, Cells& x) {
  if (x.size() != 2 || p.m > kExactLimit) return;
  double best = p.gap(x);
  Cells trial(2, {0, 0});
  for (std::size_t m0 = 0; m0 <= p.m; ++m0) {
    const std::size_t m1 = p.m - m0;
    const double n0 = p.base[0][0] + p.base[0][1] + static_cast<double>(m0);
    const double n1 = p.base[1][0] + p.base[1][1] + static_cast<double>(m1);
    if (n0 <= 0.0 || n1 <= 0.0) continue;
    for (std::size_t y0 = 0; y0 <= m0; ++y0) {
      const double rate0 = (p.base[0][1] + static_cast<double>(y0)) / n0;
      const double ideal = rate0 * n1 - p.base[1][1];
      const double lo = std::clamp(std::floor(ideal), 0.0, static_cast<double>(m1));
      const double hi = std::clamp(std::ceil(ideal), 0.0, static_cast<double>(m1));
      for (double y1 : {lo, hi}) {
        trial[0] = {m0 - y0, y0};
        trial[1] = {m1 - static_cast<std::size_t>(y1), static_cast<std::size_t>(y1)};
        const double g = p.gap(trial);
        if (g < best) {
          best = g;
          x = trial;
        }
      }
    }
  }
}

Problem make_problem(const Cells& reference, std::size_t n_total, std::size_t m) {
  Problem p;
  p.m = m;
  const double r_total = static_cast<double>(total(reference));
  const double scale = static_cast<double>(n_total - m) / r_total;
  for (const auto& c : reference) {
    p.base.push_back({static_cast<double>(c[0]) * scale, static_cast<double>(c[1]) * scale});
  }
  return p;
}

}  // namespace

double demographic_parity_gap(const GroupLabelCounts& counts) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : counts) {
    const double n = c[0] + c[1];
    if (n <= 0.0) continue;
    const double rate = c[1] / n;
    lo = std::min(lo, rate);
    hi = std::max(hi, rate);
  }
  return hi >= lo ? hi - lo : 0.0;
}

std::vector<std::array<std::size_t, 2>> QuotaPlan::cells(std::size_t groups) const {
  std::vector<std::array<std::size_t, 2>> x(groups, {0, 0});
  for (const QuotaEntry& e : entries) x.at(e.group)[static_cast<std::size_t>(e.label)] += e.count;
  return x;
}

double predicted_gap(const std::vector<std::array<std::size_t, 2>>& reference, std::size_t n_total,
                     const std::vector<std::array<std::size_t, 2>>& cells) {
  const std::size_t m = total(cells);
  if (m > n_total) throw InputError("plan has more rows than the table");
  return make_problem(reference, n_total, m).gap(cells);
}

QuotaPlan plan_fairness_quota(const std::vector<std::array<std::size_t, 2>>& reference, double rho,
                              std::size_t n_total, const std::vector<std::array<std::size_t, 2>>* warm_start) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InputError("controlled fraction must lie in [0, 1]");
  if (reference.size() < 2) throw InputError("fairness planning needs at least two groups");
  for (const auto& c : reference) {
    if (c[0] + c[1] == 0) throw InputError("every sensitive group needs reference rows");
  }
  const auto m = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n_total)));
  const Problem p = make_problem(reference, n_total, m);

  QuotaPlan plan;
  plan.controlled_rows = m;
  plan.reference_dpdiff = p.gap(Cells(reference.size(), {0, 0}));

  Cells x(reference.size(), {0, 0});
  if (warm_start && warm_start->size() == reference.size() && total(*warm_start) <= m) x = *warm_start;
  water_fill(p, x);
  local_search(p, x);
  exact_two_groups(p, x);
  const Cells prop = proportional(reference, m);
  if (p.gap(prop) <= p.gap(x)) x = prop;

  plan.predicted_dpdiff = p.gap(x);
  for (std::size_t a = 0; a < x.size(); ++a) {
    for (int y = 0; y < 2; ++y) {
      if (x[a][static_cast<std::size_t>(y)] > 0) plan.entries.push_back({a, y, x[a][static_cast<std::size_t>(y)]});
    }
  }
  return plan;
}

}  // namespace dptab
