#include "ipa/numerics/checkpoint.h"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ipa::numerics {

namespace {
constexpr const char* kMagic = "ipa-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void write_checkpoint(std::ostream& os, const ParamStore& params,
                      const std::map<std::string, std::string>& meta) {
  os << kMagic << ' ' << kVersion << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata key/value not representable: " + k);
    }
    os << "meta " << k << ' ' << v << '\n';
  }
  char buf[32];
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    os << "param " << p.name << ' ' << p.value.rank();
    for (int d : p.value.shape()) os << ' ' << d;
    os << '\n';
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", p.value[j]);
      if (j) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ckpt;
  std::string line;
  if (!std::getline(is, line)) throw CheckpointError("empty checkpoint");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) throw CheckpointError("not a checkpoint file");
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("meta ", 0) == 0) {
      const std::size_t sp = line.find(' ', 5);
      if (sp == std::string::npos) {
        ckpt.meta[line.substr(5)] = "";
      } else {
        ckpt.meta[line.substr(5, sp - 5)] = line.substr(sp + 1);
      }
      continue;
    }
    if (line.rfind("param ", 0) != 0) throw CheckpointError("unexpected line: " + line);
    std::istringstream head(line.substr(6));
    std::string name;
    int rank = 0;
    head >> name >> rank;
    std::vector<int> shape(rank);
    std::size_t count = 1;
    for (int& d : shape) {
      head >> d;
      count *= static_cast<std::size_t>(d);
    }
    if (!head) throw CheckpointError("malformed param header for " + name);
    std::string values;
    if (!std::getline(is, values)) throw CheckpointError("missing values for " + name);
    std::vector<double> data;
    data.reserve(count);
    const char* s = values.c_str();
    char* end = nullptr;
    for (std::size_t i = 0; i < count; ++i) {
      double v = std::strtod(s, &end);
      if (end == s) throw CheckpointError("short value list for " + name);
      data.push_back(v);
      s = end;
    }
    ckpt.tensors.emplace(name, Tensor(shape, std::move(data)));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(os, params, meta);
  if (!os) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return read_checkpoint(is);
}

void restore_params(const Checkpoint& ckpt, ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.value.shape()) {
      throw CheckpointError("shape mismatch for " + p.name + ": " +
                            shape_string(it->second.shape()) + " vs " +
                            shape_string(p.value.shape()));
    }
    p.value = it->second;
  }
}

}  // namespace ipa::numerics
