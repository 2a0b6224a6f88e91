#include "agsfcos/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "agsfcos/errors.hpp"
#include "agsfcos/serialize.hpp"

namespace agsfcos {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "agsfcos-checkpoint-1";

std::string blob_name(const char* dir, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s/%04zu.ten", dir, i);
  return buf;
}

void copy_into(Tensor& dst, const Tensor& src) {
  auto out = dst.mutable_values();
  auto in = src.values();
  std::copy(in.begin(), in.end(), out.begin());
}

}  // namespace

TrainState fresh_train_state(const ParameterSet& params, std::uint64_t seed) {
  TrainState s;
  s.seed = seed;
  for (const auto& p : params.items()) s.momentum.emplace_back(p.value.shape(), 0.0);
  return s;
}

void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params,
                     const TrainState& state) {
  if (state.momentum.size() != params.size()) {
    throw UsageError("save_checkpoint: momentum buffer count does not match parameters");
  }
  std::filesystem::create_directories(dir / "params");
  std::filesystem::create_directories(dir / "momentum");
  json entries = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params.items()[i];
    const std::string value_file = blob_name("params", i);
    const std::string momentum_file = blob_name("momentum", i);
    save_tensor(dir / value_file, p.value);
    save_tensor(dir / momentum_file, state.momentum[i]);
    entries.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"file", value_file},
                       {"momentum", momentum_file}});
  }
  const json manifest = {{"format", kFormat},
                         {"step", state.step},
                         {"epoch", state.epoch},
                         {"seed", state.seed},
                         {"best_ap50", state.best_ap50},
                         {"parameters", entries}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << "\n";
}

TrainState load_checkpoint(const std::filesystem::path& dir, ParameterSet& params) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != kFormat) {
    throw FormatError(dir.string() + ": unrecognized checkpoint format");
  }

  std::map<std::string, json> stored;
  for (const json& e : manifest.at("parameters")) stored[e.at("name").get<std::string>()] = e;

  std::vector<std::string> problems;
  for (const auto& p : params.items()) {
    const auto it = stored.find(p.name);
    if (it == stored.end()) {
      problems.push_back(p.name + " (missing from checkpoint)");
    } else if (it->second.at("shape").get<Shape>() != p.value.shape()) {
      problems.push_back(p.name + " (checkpoint " +
                         shape_str(it->second.at("shape").get<Shape>()) + ", model " +
                         shape_str(p.value.shape()) + ")");
    }
  }
  for (const auto& [name, entry] : stored) {
    if (!params.find(name)) problems.push_back(name + " (not in model)");
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "checkpoint " << dir.string() << " is incompatible with the model:";
    for (const auto& p : problems) msg << "\n  " << p;
    throw CompatibilityError(msg.str());
  }

  TrainState state;
  state.step = manifest.at("step").get<std::size_t>();
  state.epoch = manifest.at("epoch").get<std::size_t>();
  state.seed = manifest.at("seed").get<std::uint64_t>();
  state.best_ap50 = manifest.at("best_ap50").get<double>();
  for (auto& p : params.items()) {
    const json& entry = stored.at(p.name);
    Tensor value = load_tensor(dir / entry.at("file").get<std::string>());
    Tensor momentum = load_tensor(dir / entry.at("momentum").get<std::string>());
    if (value.shape() != p.value.shape() || momentum.shape() != p.value.shape()) {
      throw CompatibilityError("checkpoint blob for " + p.name + " has the wrong shape");
    }
    copy_into(p.value, value);
    state.momentum.push_back(momentum);
  }
  return state;
}

}  // namespace agsfcos
