#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqn/rng.hpp"

namespace sqn {

struct DiscretePmf {
  std::vector<int> values;
  std::vector<double> probs;

  int sample(double u) const { return sample_from_pmf(values, probs, u); }

  int max_value() const {
    int m = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (probs[i] > 0.0) m = std::max(m, values[i]);
    return m;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * probs[i];
    return s;
  }

  void validate(const std::string& what) const {
    if (values.empty() || values.size() != probs.size())
      throw std::invalid_argument(what + ": values/probabilities length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0)
        throw std::invalid_argument(what + ": negative value in support");
      if (probs[i] < 0.0)
        throw std::invalid_argument(what + ": negative probability");
      for (std::size_t j = i + 1; j < values.size(); ++j)
        if (values[i] == values[j])
          throw std::invalid_argument(what + ": duplicate value in support");
      sum += probs[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument(what + ": probabilities do not sum to 1");
  }
};

struct TrafficClass {
  int id = 0;  // 1-based
  int source = 0;
  int destination = 0;
  DiscretePmf arrivals;
};

struct LinkSpec {
  int id = 0;  // 1-based
  int start = 0;
  int end = 0;
  DiscretePmf capacity;
};

enum class TaskKind { SingleHop, MultiHop };

struct NetworkConfig {
  std::string name;
  TaskKind kind = TaskKind::SingleHop;
  int nodes = 0;  // multi-hop: node ids are 1..nodes; single-hop: 0 is the base station
  std::vector<TrafficClass> classes;
  std::vector<LinkSpec> links;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_links() const { return static_cast<int>(links.size()); }

  // multi-hop queue layout: row-major (node-1)*K + (class-1)
  int queue_rows() const {
    return kind == TaskKind::SingleHop ? num_classes() : nodes * num_classes();
  }

  int max_slot_arrivals() const {
    int s = 0;
    for (const auto& c : classes) s += c.arrivals.max_value();
    return s;
  }
};

namespace detail {

inline DiscretePmf parse_pmf(const nlohmann::json& j, const std::string& values_key,
                             const std::string& probs_key, const std::string& what) {
  DiscretePmf p;
  if (!j.contains(values_key) || !j.contains(probs_key))
    throw std::invalid_argument(what + ": missing " + values_key + "/" + probs_key);
  p.values = j.at(values_key).get<std::vector<int>>();
  p.probs = j.at(probs_key).get<std::vector<double>>();
  p.validate(what);
  return p;
}

inline void check_ids(std::vector<int> ids, const std::string& what) {
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0 && ids[i] == ids[i - 1])
      throw std::invalid_argument(what + ": duplicate id " + std::to_string(ids[i]));
    if (ids[i] != static_cast<int>(i) + 1)
      throw std::invalid_argument(what + ": ids must be 1..N");
  }
}

}  // namespace detail

// True if dest is reachable from node `from` over the directed link graph.
inline bool reachable(const NetworkConfig& cfg, int from, int dest) {
  if (from == dest) return true;
  std::vector<int> seen;
  std::queue<int> frontier;
  frontier.push(from);
  seen.push_back(from);
  while (!frontier.empty()) {
    int n = frontier.front();
    frontier.pop();
    for (const auto& l : cfg.links) {
      if (l.start != n) continue;
      if (l.end == dest) return true;
      if (std::find(seen.begin(), seen.end(), l.end) == seen.end()) {
        seen.push_back(l.end);
        frontier.push(l.end);
      }
    }
  }
  return false;
}

inline void validate_config(const NetworkConfig& cfg) {
  if (cfg.classes.empty()) throw std::invalid_argument("config: no traffic classes");
  if (cfg.links.empty()) throw std::invalid_argument("config: no links");

  std::vector<int> cids, lids;
  for (const auto& c : cfg.classes) cids.push_back(c.id);
  for (const auto& l : cfg.links) lids.push_back(l.id);
  detail::check_ids(cids, "config classes");
  detail::check_ids(lids, "config links");

  for (const auto& c : cfg.classes) {
    c.arrivals.validate("class " + std::to_string(c.id) + " arrivals");
    if (c.source == c.destination)
      throw std::invalid_argument("class " + std::to_string(c.id) +
                                  ": source equals destination");
  }
  for (const auto& l : cfg.links) {
    l.capacity.validate("link " + std::to_string(l.id) + " capacity");
    if (l.start == l.end)
      throw std::invalid_argument("link " + std::to_string(l.id) + ": self loop");
  }

  if (cfg.kind == TaskKind::SingleHop) {
    const int K = cfg.num_classes();
    if (cfg.num_links() != K)
      throw std::invalid_argument("single-hop config: need exactly one link per class");
    int bs = cfg.classes[0].destination;
    for (const auto& c : cfg.classes) {
      if (c.destination != bs)
        throw std::invalid_argument("single-hop config: all classes share one destination");
      const auto& l = cfg.links[c.id - 1];
      if (l.start != c.source || l.end != bs)
        throw std::invalid_argument("single-hop config: link " + std::to_string(l.id) +
                                    " must connect class source to the destination");
    }
  } else {
    if (cfg.nodes < 2) throw std::invalid_argument("multi-hop config: need nodes >= 2");
    for (const auto& c : cfg.classes) {
      if (c.source < 1 || c.source > cfg.nodes || c.destination < 1 ||
          c.destination > cfg.nodes)
        throw std::invalid_argument("multi-hop config: class endpoint out of range");
    }
    for (const auto& l : cfg.links) {
      if (l.start < 1 || l.start > cfg.nodes || l.end < 1 || l.end > cfg.nodes)
        throw std::invalid_argument("multi-hop config: link endpoint out of range");
    }
    for (const auto& c : cfg.classes) {
      if (!reachable(cfg, c.source, c.destination))
        throw std::invalid_argument("multi-hop config: destination of class " +
                                    std::to_string(c.id) +
                                    " unreachable from its source");
    }
  }
}

inline NetworkConfig parse_config(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.name = j.value("name", std::string("unnamed"));
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "single-hop")
    cfg.kind = TaskKind::SingleHop;
  else if (kind == "multi-hop")
    cfg.kind = TaskKind::MultiHop;
  else
    throw std::invalid_argument("config: unknown kind '" + kind + "'");
  cfg.nodes = j.value("nodes", 0);

  for (const auto& jc : j.at("classes")) {
    TrafficClass c;
    c.id = jc.at("id").get<int>();
    c.source = jc.at("source").get<int>();
    c.destination = jc.at("destination").get<int>();
    c.arrivals = detail::parse_pmf(jc, "arrival_values", "arrival_probs",
                                   "class " + std::to_string(c.id) + " arrivals");
    cfg.classes.push_back(c);
  }
  for (const auto& jl : j.at("links")) {
    LinkSpec l;
    l.id = jl.at("id").get<int>();
    l.start = jl.at("start").get<int>();
    l.end = jl.at("end").get<int>();
    l.capacity = detail::parse_pmf(jl, "capacity_values", "capacity_probs",
                                   "link " + std::to_string(l.id) + " capacity");
    cfg.links.push_back(l);
  }

  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(cfg.classes.begin(), cfg.classes.end(), by_id);
  std::sort(cfg.links.begin(), cfg.links.end(), by_id);

  if (cfg.kind == TaskKind::SingleHop && cfg.nodes == 0)
    cfg.nodes = cfg.num_classes() + 1;

  validate_config(cfg);
  return cfg;
}

inline NetworkConfig load_config_text(const std::string& text) {
  return parse_config(nlohmann::json::parse(text));
}

inline NetworkConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return parse_config(j);
}

}  // namespace sqn
