#include "afx/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "afx/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian raw scalars");

namespace afx {

namespace {

std::vector<int> parse_dims(const std::string& s) {
  std::vector<int> dims;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) throw ConfigError("checkpoint: malformed shape '" + s + "'");
    dims.push_back(std::stoi(part));
  }
  if (dims.empty()) throw ConfigError("checkpoint: malformed shape '" + s + "'");
  return dims;
}

std::string dims_string(const std::vector<int>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamList& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  f << "afxckpt 1 " << tensors.size() << "\n";
  for (const NamedParam& t : tensors) {
    if (t.name.find_first_of(" \t\n") != std::string::npos)
      throw ConfigError("checkpoint: tensor name '" + t.name + "' contains whitespace");
    f << t.name << "\t" << dtype_name(t.tensor.dtype()) << "\t" << dims_string(t.tensor.shape())
      << "\n";
  }
  for (const NamedParam& t : tensors) {
    const TensorNode& n = *t.tensor.node();
    if (n.dtype == DType::F32)
      f.write(reinterpret_cast<const char*>(n.f32.data()),
              static_cast<std::streamsize>(n.f32.size() * 4));
    else
      f.write(reinterpret_cast<const char*>(n.f64.data()),
              static_cast<std::streamsize>(n.f64.size() * 8));
  }
  if (!f) throw ConfigError("checkpoint: write to '" + path + "' failed");
}

ParamList load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("checkpoint: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  f >> magic >> version >> count;
  f.ignore(1, '\n');
  if (magic != "afxckpt" || version != 1)
    throw ConfigError("checkpoint: '" + path + "' is not an afxckpt v1 file");
  ParamList out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("checkpoint: truncated manifest in '" + path + "'");
    std::size_t t1 = line.find('\t');
    std::size_t t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ConfigError("checkpoint: malformed manifest line '" + line + "'");
    std::string name = line.substr(0, t1);
    DType dt = dtype_from_name(line.substr(t1 + 1, t2 - t1 - 1));
    std::vector<int> dims = parse_dims(line.substr(t2 + 1));
    out.push_back({name, Tensor::zeros(dims, dt)});
  }
  for (NamedParam& t : out) {
    TensorNode& n = *t.tensor.node();
    if (n.dtype == DType::F32)
      f.read(reinterpret_cast<char*>(n.f32.data()), static_cast<std::streamsize>(n.f32.size() * 4));
    else
      f.read(reinterpret_cast<char*>(n.f64.data()), static_cast<std::streamsize>(n.f64.size() * 8));
    if (!f) throw ConfigError("checkpoint: truncated payload for '" + t.name + "' in '" + path + "'");
  }
  return out;
}

void load_checkpoint_into(const std::string& path, const ParamList& dest) {
  ParamList loaded = load_checkpoint(path);
  std::map<std::string, const NamedParam*> by_name;
  for (const NamedParam& t : loaded) by_name[t.name] = &t;

  std::string diff;
  for (const NamedParam& d : dest) {
    auto it = by_name.find(d.name);
    if (it == by_name.end()) {
      diff += "  missing: " + d.name + "\n";
      continue;
    }
    if (it->second->tensor.shape() != d.tensor.shape() ||
        it->second->tensor.dtype() != d.tensor.dtype())
      diff += "  mismatched: " + d.name + " expected " + shape_string(d.tensor.shape()) + " " +
              dtype_name(d.tensor.dtype()) + ", found " +
              shape_string(it->second->tensor.shape()) + " " +
              dtype_name(it->second->tensor.dtype()) + "\n";
    by_name.erase(it);
  }
  for (const auto& [name, t] : by_name) diff += "  unexpected: " + name + "\n";
  if (!diff.empty()) throw ConfigError("checkpoint: manifest diff for '" + path + "':\n" + diff);

  std::map<std::string, const NamedParam*> loaded_by_name;
  for (const NamedParam& t : loaded) loaded_by_name[t.name] = &t;
  for (const NamedParam& d : dest) {
    const TensorNode& src = *loaded_by_name[d.name]->tensor.node();
    TensorNode& dst = *d.tensor.node();
    dst.f32 = src.f32;
    dst.f64 = src.f64;
  }
}

}  // namespace afx
