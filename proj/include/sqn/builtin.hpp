#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "sqn/config.hpp"

namespace sqn {

// The four reference networks, embedded so tests and the CLI work without
// locating the configs/ directory. configs/*.json carry the same content.
namespace builtin {

inline const char* sh1_json = R"json({
  "name": "sh1",
  "kind": "single-hop",
  "classes": [
    {"id": 1, "source": 1, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.7, 0.3]},
    {"id": 2, "source": 2, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.3, 0.7]}
  ],
  "links": [
    {"id": 1, "start": 1, "end": 0, "capacity_values": [0, 1], "capacity_probs": [0.5, 0.5]},
    {"id": 2, "start": 2, "end": 0, "capacity_values": [0, 1, 2], "capacity_probs": [0.2, 0.5, 0.3]}
  ]
})json";

inline const char* sh2_json = R"json({
  "name": "sh2",
  "kind": "single-hop",
  "classes": [
    {"id": 1, "source": 1, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.75, 0.25]},
    {"id": 2, "source": 2, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.5, 0.5]},
    {"id": 3, "source": 3, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.5, 0.5]},
    {"id": 4, "source": 4, "destination": 0, "arrival_values": [0, 1], "arrival_probs": [0.5, 0.5]}
  ],
  "links": [
    {"id": 1, "start": 1, "end": 0, "capacity_values": [0, 1], "capacity_probs": [0.3, 0.7]},
    {"id": 2, "start": 2, "end": 0, "capacity_values": [0, 1, 2], "capacity_probs": [0.2, 0.5, 0.3]},
    {"id": 3, "start": 3, "end": 0, "capacity_values": [0, 1, 2], "capacity_probs": [0.1, 0.1, 0.8]},
    {"id": 4, "start": 4, "end": 0, "capacity_values": [0, 1, 2, 3], "capacity_probs": [0.25, 0.25, 0.25, 0.25]}
  ]
})json";

inline const char* mh1_json = R"json({
  "name": "mh1",
  "kind": "multi-hop",
  "nodes": 4,
  "classes": [
    {"id": 1, "source": 1, "destination": 4, "arrival_values": [0, 1], "arrival_probs": [0.2, 0.8]},
    {"id": 2, "source": 1, "destination": 4, "arrival_values": [0, 1], "arrival_probs": [0.6, 0.4]}
  ],
  "links": [
    {"id": 1, "start": 1, "end": 2, "capacity_values": [0, 1, 2], "capacity_probs": [0.0, 0.5, 0.5]},
    {"id": 2, "start": 1, "end": 3, "capacity_values": [0, 1], "capacity_probs": [0.5, 0.5]},
    {"id": 3, "start": 2, "end": 3, "capacity_values": [0, 2], "capacity_probs": [0.2, 0.8]},
    {"id": 4, "start": 3, "end": 2, "capacity_values": [0, 1], "capacity_probs": [0.2, 0.8]},
    {"id": 5, "start": 2, "end": 4, "capacity_values": [0, 1], "capacity_probs": [0.5, 0.5]},
    {"id": 6, "start": 3, "end": 4, "capacity_values": [0, 2], "capacity_probs": [0.2, 0.8]}
  ]
})json";

inline const char* mh2_json = R"json({
  "name": "mh2",
  "kind": "multi-hop",
  "nodes": 8,
  "classes": [
    {"id": 1, "source": 1, "destination": 5, "arrival_values": [0, 4], "arrival_probs": [0.5, 0.5]},
    {"id": 2, "source": 1, "destination": 6, "arrival_values": [0, 3], "arrival_probs": [0.0, 1.0]},
    {"id": 3, "source": 1, "destination": 7, "arrival_values": [0, 3], "arrival_probs": [0.4, 0.6]},
    {"id": 4, "source": 1, "destination": 8, "arrival_values": [0, 2], "arrival_probs": [0.2, 0.8]}
  ],
  "links": [
    {"id": 1, "start": 1, "end": 2, "capacity_values": [0, 2, 4], "capacity_probs": [0.2, 0.4, 0.4]},
    {"id": 2, "start": 1, "end": 3, "capacity_values": [3, 5], "capacity_probs": [0.5, 0.5]},
    {"id": 3, "start": 1, "end": 4, "capacity_values": [0, 2, 4], "capacity_probs": [0.2, 0.4, 0.4]},
    {"id": 4, "start": 2, "end": 5, "capacity_values": [0, 3], "capacity_probs": [0.0, 1.0]},
    {"id": 5, "start": 2, "end": 6, "capacity_values": [1, 3], "capacity_probs": [0.5, 0.5]},
    {"id": 6, "start": 3, "end": 6, "capacity_values": [2, 4], "capacity_probs": [0.5, 0.5]},
    {"id": 7, "start": 3, "end": 7, "capacity_values": [2, 4], "capacity_probs": [0.5, 0.5]},
    {"id": 8, "start": 4, "end": 7, "capacity_values": [0, 2], "capacity_probs": [0.2, 0.8]},
    {"id": 9, "start": 4, "end": 8, "capacity_values": [0, 3], "capacity_probs": [0.0, 1.0]},
    {"id": 10, "start": 2, "end": 3, "capacity_values": [2, 4], "capacity_probs": [0.5, 0.5]},
    {"id": 11, "start": 3, "end": 2, "capacity_values": [2, 4], "capacity_probs": [0.5, 0.5]},
    {"id": 12, "start": 3, "end": 4, "capacity_values": [2, 5, 8], "capacity_probs": [0.2, 0.4, 0.4]},
    {"id": 13, "start": 4, "end": 3, "capacity_values": [2, 5, 8], "capacity_probs": [0.2, 0.4, 0.4]}
  ]
})json";

}  // namespace builtin

inline std::string builtin_json(const std::string& name) {
  if (name == "sh1") return builtin::sh1_json;
  if (name == "sh2") return builtin::sh2_json;
  if (name == "mh1") return builtin::mh1_json;
  if (name == "mh2") return builtin::mh2_json;
  throw std::invalid_argument("unknown builtin config: " + name);
}

inline NetworkConfig builtin_config(const std::string& name) {
  return load_config_text(builtin_json(name));
}

inline bool is_builtin_config(const std::string& name) {
  return name == "sh1" || name == "sh2" || name == "mh1" || name == "mh2";
}

// Accepts a builtin name or a path to a JSON file; returns the raw text.
inline std::string resolve_config_text(const std::string& arg) {
  if (is_builtin_config(arg)) return builtin_json(arg);
  std::ifstream in(arg);
  if (!in) throw std::runtime_error("cannot open config file: " + arg);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkConfig resolve_config(const std::string& arg) {
  return load_config_text(resolve_config_text(arg));
}

}  // namespace sqn
