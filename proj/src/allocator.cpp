#include "anchorgen/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace anchorgen {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_quality(double q) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", q);
  return buf;
}

}  // namespace

void Budget::validate() const {
  if (!(limit_bytes > 0)) {
    throw std::invalid_argument("budget: limit_bytes must be > 0");
  }
  if (!(data_divisor > 0) || data_divisor > 1) {
    throw std::invalid_argument("budget: data_divisor must be in (0, 1]");
  }
  if (decoder_bytes < 0) {
    throw std::invalid_argument("budget: decoder_bytes must be >= 0");
  }
}

InfeasibleBudgetError::InfeasibleBudgetError(double overshoot_bytes)
    : std::runtime_error("infeasible budget: even the all-minimum selection "
                         "exceeds the limit by " +
                         std::to_string(overshoot_bytes) + " bytes"),
      overshoot_bytes_(overshoot_bytes) {}

double submission_size(std::int64_t total_data_bytes, const Budget& budget) {
  return static_cast<double>(total_data_bytes) / budget.data_divisor +
         static_cast<double>(budget.decoder_bytes);
}

double relative_model_size(double submission_bytes, double limit_bytes) {
  return 100.0 * submission_bytes / limit_bytes;
}

std::vector<std::size_t> upper_hull(const std::vector<RdPoint>& points) {
  if (points.empty()) {
    throw std::invalid_argument("upper_hull: empty point set");
  }

  // size ascending; on equal size higher quality first; then input order.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].size_bytes != points[b].size_bytes) {
      return points[a].size_bytes < points[b].size_bytes;
    }
    if (points[a].quality != points[b].quality) {
      return points[a].quality > points[b].quality;
    }
    return a < b;
  });

  // Pareto frontier: strictly increasing size and quality.
  std::vector<std::size_t> frontier;
  for (std::size_t idx : order) {
    if (!frontier.empty() &&
        points[idx].size_bytes == points[frontier.back()].size_bytes) {
      continue;  // equal size: the better candidate was sorted first
    }
    if (!frontier.empty() &&
        points[idx].quality <= points[frontier.back()].quality) {
      continue;  // dominated
    }
    frontier.push_back(idx);
  }

  // Concave envelope: drop any point on or below the chord of its
  // neighbours, leaving strictly decreasing slopes.
  std::vector<std::size_t> hull;
  for (std::size_t idx : frontier) {
    const RdPoint& c = points[idx];
    while (hull.size() >= 2) {
      const RdPoint& a = points[hull[hull.size() - 2]];
      const RdPoint& b = points[hull.back()];
      const double cross =
          static_cast<double>(c.size_bytes - a.size_bytes) *
              (b.quality - a.quality) -
          static_cast<double>(b.size_bytes - a.size_bytes) *
              (c.quality - a.quality);
      if (cross <= 0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(idx);
  }
  return hull;
}

SequenceRdSet SequenceRdSet::create(std::string sequence_id,
                                    std::vector<RdPoint> points) {
  SequenceRdSet set;
  set.sequence_id = std::move(sequence_id);
  set.points = std::move(points);
  set.hull = upper_hull(set.points);
  return set;
}

std::size_t select_hull_pos(const SequenceRdSet& set, double lambda) {
  if (lambda < 0) {
    throw std::invalid_argument("select_at_lambda: negative lambda");
  }
  if (set.hull.empty()) {
    throw std::invalid_argument("select_at_lambda: hull not computed");
  }
  // Hull is size-ascending, so a strict comparison resolves ties toward the
  // smaller size.
  std::size_t best = 0;
  double best_obj = set.hull_point(0).quality -
                    lambda * static_cast<double>(set.hull_point(0).size_bytes);
  for (std::size_t pos = 1; pos < set.hull.size(); ++pos) {
    const RdPoint& p = set.hull_point(pos);
    const double obj =
        p.quality - lambda * static_cast<double>(p.size_bytes);
    if (obj > best_obj) {
      best = pos;
      best_obj = obj;
    }
  }
  return best;
}

const RdPoint& select_at_lambda(const SequenceRdSet& set, double lambda) {
  return set.hull_point(select_hull_pos(set, lambda));
}

Allocation solve_budget(const std::vector<SequenceRdSet>& sets,
                        const Budget& budget) {
  budget.validate();
  if (sets.empty()) {
    throw std::invalid_argument("solve_budget: no sequences");
  }
  {
    std::set<std::string> ids;
    for (const auto& set : sets) {
      if (set.points.empty() || set.hull.empty()) {
        throw std::invalid_argument("solve_budget: empty set for sequence '" +
                                    set.sequence_id + "'");
      }
      if (!ids.insert(set.sequence_id).second) {
        throw std::invalid_argument("solve_budget: duplicate sequence '" +
                                    set.sequence_id + "'");
      }
    }
  }

  const auto feasible = [&](std::int64_t total) {
    return submission_size(total, budget) <= budget.limit_bytes;
  };

  std::int64_t min_total = 0;
  for (const auto& set : sets) min_total += set.hull_point(0).size_bytes;
  if (!feasible(min_total)) {
    throw InfeasibleBudgetError(submission_size(min_total, budget) -
                                budget.limit_bytes);
  }

  std::vector<std::size_t> sel(sets.size());
  const auto select_all = [&](double lambda) -> std::int64_t {
    std::int64_t total = 0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      sel[k] = select_hull_pos(sets[k], lambda);
      total += sets[k].hull_point(sel[k]).size_bytes;
    }
    return total;
  };

  double lambda_star = 0.0;
  std::int64_t total = select_all(0.0);
  if (!feasible(total)) {
    // Selection is piecewise constant in lambda and only changes at hull
    // slopes, so bisecting over the sorted breakpoints converges exactly.
    // At the largest slope every sequence selects its minimum point, which
    // was proven feasible above.
    std::vector<double> slopes;
    for (const auto& set : sets) {
      for (std::size_t pos = 0; pos + 1 < set.hull.size(); ++pos) {
        const RdPoint& a = set.hull_point(pos);
        const RdPoint& b = set.hull_point(pos + 1);
        slopes.push_back((b.quality - a.quality) /
                         static_cast<double>(b.size_bytes - a.size_bytes));
      }
    }
    std::sort(slopes.begin(), slopes.end());
    slopes.erase(std::unique(slopes.begin(), slopes.end()), slopes.end());

    std::size_t lo = 0;                  // infeasible or untested below
    std::size_t hi = slopes.size() - 1;  // feasible
    int iterations = 0;
    while (lo < hi && iterations < 200) {
      ++iterations;
      const std::size_t mid = lo + (hi - lo) / 2;
      if (feasible(select_all(slopes[mid]))) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    lambda_star = slopes[hi];
    total = select_all(lambda_star);
  }

  // Greedy refinement: repeatedly take the best-ratio single hull upgrade
  // that still fits.
  for (;;) {
    std::size_t best_k = sets.size();
    double best_ratio = -1.0;
    std::int64_t best_delta = 0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      if (sel[k] + 1 >= sets[k].hull.size()) continue;
      const RdPoint& cur = sets[k].hull_point(sel[k]);
      const RdPoint& next = sets[k].hull_point(sel[k] + 1);
      const std::int64_t delta_s = next.size_bytes - cur.size_bytes;
      if (!feasible(total + delta_s)) continue;
      const double ratio =
          (next.quality - cur.quality) / static_cast<double>(delta_s);
      if (best_k == sets.size() || ratio > best_ratio ||
          (ratio == best_ratio && delta_s < best_delta)) {
        best_k = k;
        best_ratio = ratio;
        best_delta = delta_s;
      }
    }
    if (best_k == sets.size()) break;
    ++sel[best_k];
    total += best_delta;
  }

  Allocation alloc;
  alloc.lambda_star = lambda_star;
  alloc.total_data_bytes = total;
  alloc.submission_bytes = submission_size(total, budget);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const RdPoint& p = sets[k].hull_point(sel[k]);
    alloc.choices.emplace(sets[k].sequence_id, p);
    alloc.sum_quality += p.quality;
  }
  alloc.mean_quality = alloc.sum_quality / static_cast<double>(sets.size());
  return alloc;
}

std::string format_rd_csv(const std::vector<SequenceRdSet>& sets) {
  std::string out = "sequence_id,config_id,qp,size_bytes,quality\n";
  for (const auto& set : sets) {
    for (const auto& p : set.points) {
      out += set.sequence_id;
      out += ',';
      out += p.config_id;
      out += ',';
      out += std::to_string(p.qp);
      out += ',';
      out += std::to_string(p.size_bytes);
      out += ',';
      out += format_quality(p.quality);
      out += '\n';
    }
  }
  return out;
}

void write_rd_csv(const std::vector<SequenceRdSet>& sets,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << format_rd_csv(sets);
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

std::vector<SequenceRdSet> parse_rd_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "sequence_id,config_id,qp,size_bytes,quality") {
    throw std::runtime_error("rd csv: bad or missing header");
  }

  std::vector<SequenceRdSet> sets;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) {
      throw std::runtime_error("rd csv line " + std::to_string(line_no) +
                               ": expected 5 fields");
    }
    RdPoint p;
    p.config_id = fields[1];
    try {
      p.qp = std::stoi(fields[2]);
      p.size_bytes = std::stoll(fields[3]);
      p.quality = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw std::runtime_error("rd csv line " + std::to_string(line_no) +
                               ": invalid numeric field");
    }
    if (p.size_bytes < 1) {
      throw std::runtime_error("rd csv line " + std::to_string(line_no) +
                               ": size_bytes must be >= 1");
    }
    if (!(p.quality > 0.0) || p.quality > 1.0) {
      throw std::runtime_error("rd csv line " + std::to_string(line_no) +
                               ": quality must be in (0, 1]");
    }
    auto [it, inserted] = index.emplace(fields[0], sets.size());
    if (inserted) {
      sets.push_back(SequenceRdSet{fields[0], {}, {}});
    }
    auto& set = sets[it->second];
    for (const auto& existing : set.points) {
      if (existing.config_id == p.config_id && existing.qp == p.qp) {
        throw std::runtime_error("rd csv line " + std::to_string(line_no) +
                                 ": duplicate (config_id, qp) for sequence '" +
                                 fields[0] + "'");
      }
    }
    set.points.push_back(std::move(p));
  }
  if (sets.empty()) {
    throw std::runtime_error("rd csv: no data rows");
  }
  for (auto& set : sets) set.hull = upper_hull(set.points);
  return sets;
}

std::vector<SequenceRdSet> read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_rd_csv(buf.str());
}

std::string format_allocation_json(const AllocationFile& file) {
  ordered_json j;
  j["adapter"] = file.adapter;
  j["budget"] = {{"limit_bytes", file.budget.limit_bytes},
                 {"data_divisor", file.budget.data_divisor},
                 {"decoder_bytes", file.budget.decoder_bytes}};
  j["lambda_star"] = file.allocation.lambda_star;
  j["total_data_bytes"] = file.allocation.total_data_bytes;
  j["submission_bytes"] = file.allocation.submission_bytes;
  j["relative_model_size_percent"] = relative_model_size(
      file.allocation.submission_bytes, file.budget.limit_bytes);
  j["sum_quality"] = file.allocation.sum_quality;
  j["mean_quality"] = file.allocation.mean_quality;
  ordered_json choices = ordered_json::object();
  for (const auto& [id, p] : file.allocation.choices) {
    choices[id] = {{"config_id", p.config_id},
                   {"qp", p.qp},
                   {"size_bytes", p.size_bytes},
                   {"quality", p.quality}};
  }
  j["choices"] = std::move(choices);
  return j.dump(2) + "\n";
}

void write_allocation_json(const AllocationFile& file,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << format_allocation_json(file);
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

AllocationFile read_allocation_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("bad allocation json " + path.string() + ": " +
                             e.what());
  }
  AllocationFile file;
  file.adapter = j.at("adapter").get<std::string>();
  file.budget.limit_bytes = j.at("budget").at("limit_bytes").get<double>();
  file.budget.data_divisor = j.at("budget").at("data_divisor").get<double>();
  file.budget.decoder_bytes =
      j.at("budget").at("decoder_bytes").get<std::int64_t>();
  file.allocation.lambda_star = j.at("lambda_star").get<double>();
  file.allocation.total_data_bytes =
      j.at("total_data_bytes").get<std::int64_t>();
  file.allocation.submission_bytes = j.at("submission_bytes").get<double>();
  file.allocation.sum_quality = j.at("sum_quality").get<double>();
  file.allocation.mean_quality = j.at("mean_quality").get<double>();
  for (const auto& [id, c] : j.at("choices").items()) {
    RdPoint p;
    p.config_id = c.at("config_id").get<std::string>();
    p.qp = c.at("qp").get<int>();
    p.size_bytes = c.at("size_bytes").get<std::int64_t>();
    p.quality = c.at("quality").get<double>();
    file.allocation.choices.emplace(id, std::move(p));
  }
  return file;
}

}  // namespace anchorgen
