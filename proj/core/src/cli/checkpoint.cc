// Copyright 2026 The XSpan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xspan/cli/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "xspan/numerics/tensor.h"

namespace xspan::cli {

namespace {

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw std::runtime_error("checkpoint: payload is truncated");
  }
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string single_line(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

Checkpoint make_checkpoint(const model::Model& model, const train::OptimState* optim,
                           int64_t step, const std::string& config_json) {
  Checkpoint c;
  c.step = step;
  c.config_json = config_json;
  const auto params = model.parameters();
  for (const auto& [name, t] : params) {
    c.arrays.push_back({"param/" + name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  if (optim) {
    c.adam_step = optim->step;
    c.skipped_steps = optim->skipped_steps;
    for (size_t k = 0; k < params.size(); ++k) {
      c.arrays.push_back({"adam_m/" + params[k].first, params[k].second.shape(),
                          optim->first_moment.at(k)});
      c.arrays.push_back({"adam_v/" + params[k].first, params[k].second.shape(),
                          optim->second_moment.at(k)});
    }
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out << "XSPAN-CHECKPOINT " << ckpt.version << '\n';
    out << "step " << ckpt.step << '\n';
    out << "adam_step " << ckpt.adam_step << '\n';
    out << "skipped_steps " << ckpt.skipped_steps << '\n';
    out << "config " << single_line(ckpt.config_json) << '\n';
    for (const NamedArray& a : ckpt.arrays) {
      out << "array " << a.name << " f64 " << a.shape.size();
      for (int64_t d : a.shape) out << ' ' << d;
      out << '\n';
    }
    out << "end\n";
    for (const NamedArray& a : ckpt.arrays) {
      for (double v : a.values) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  Checkpoint c;
  std::string line;
  if (!std::getline(in, line) || line.rfind("XSPAN-CHECKPOINT ", 0) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  c.version = std::stoi(line.substr(17));
  if (c.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(c.version));
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "step") {
      c.step = std::stoll(rest);
    } else if (key == "adam_step") {
      c.adam_step = std::stoll(rest);
    } else if (key == "skipped_steps") {
      c.skipped_steps = std::stoll(rest);
    } else if (key == "config") {
      c.config_json = rest;
    } else if (key == "array") {
      std::istringstream ss(rest);
      NamedArray a;
      std::string dtype;
      size_t rank = 0;
      ss >> a.name >> dtype >> rank;
      if (!ss || dtype != "f64") throw std::runtime_error("checkpoint: bad array line: " + line);
      a.shape.resize(rank);
      for (int64_t& d : a.shape) ss >> d;
      if (!ss) throw std::runtime_error("checkpoint: bad array shape: " + line);
      c.arrays.push_back(std::move(a));
    } else {
      throw std::runtime_error("checkpoint: unknown header line: " + line);
    }
  }
  if (!ended) throw std::runtime_error("checkpoint: header has no end marker");
  for (NamedArray& a : c.arrays) {
    a.values.resize(static_cast<size_t>(numerics::numel(a.shape)));
    for (double& v : a.values) v = get_f64(in);
  }
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, model::Model& model, train::OptimState* optim) {
  const auto params = model.parameters();
  for (size_t k = 0; k < params.size(); ++k) {
    const auto& [name, tensor] = params[k];
    const NamedArray* a = ckpt.find("param/" + name);
    if (!a) throw std::runtime_error("checkpoint: missing parameter " + name);
    if (a->shape != tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    numerics::Tensor t = tensor;
    std::copy(a->values.begin(), a->values.end(), t.mutable_data().begin());
    if (optim) {
      const NamedArray* m = ckpt.find("adam_m/" + name);
      const NamedArray* v = ckpt.find("adam_v/" + name);
      if (!m || !v) throw std::runtime_error("checkpoint: missing optimizer state for " + name);
      optim->first_moment.at(k) = m->values;
      optim->second_moment.at(k) = v->values;
    }
  }
  if (optim) {
    optim->step = ckpt.adam_step;
    optim->skipped_steps = ckpt.skipped_steps;
  }
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int64_t step) {
  std::ostringstream name;
  name << "ckpt_" << std::setw(9) << std::setfill('0') << step << ".xsck";
  return dir / name.str();
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && entry.path().extension() == ".xsck") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void prune_checkpoints(const std::filesystem::path& dir, std::size_t keep) {
  auto all = list_checkpoints(dir);
  while (all.size() > keep) {
    std::filesystem::remove(all.front());
    all.erase(all.begin());
  }
}

}  // namespace xspan::cli
