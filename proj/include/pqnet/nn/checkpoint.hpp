#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pqnet/datakit/io.hpp"
#include "pqnet/nn/tensor.hpp"

namespace pqnet::nn {

/// Named float32 tensor as stored in a checkpoint (column-major data).
struct StoredTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

/// Checkpoint container:
///   "PQCK", uint32 version,
///   uint32 n_meta, n_meta x (uint32 len, key bytes, uint32 len, value bytes),
///   uint32 n_tensors, n_tensors x (uint32 len, name bytes, uint32 ndim,
///   ndim x uint32 dims, prod(dims) x float32), all little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::map<std::string, std::string> meta;
  std::map<std::string, StoredTensor> tensors;

  template <class S>
  void store(const ParamList<S>& params) {
    for (const auto* p : params) {
      StoredTensor t;
      t.shape = {static_cast<std::uint32_t>(p->value.rows()), static_cast<std::uint32_t>(p->value.cols())};
      t.data.resize(static_cast<std::size_t>(p->value.size()));
      for (Eigen::Index i = 0; i < p->value.size(); ++i) t.data[i] = static_cast<float>(p->value.data()[i]);
      tensors[p->name] = std::move(t);
    }
  }

  /// Copies matching tensors into `params`; every parameter must be present
  /// with the same shape.
  template <class S>
  void restore(const ParamList<S>& params) const {
    for (auto* p : params) {
      auto it = tensors.find(p->name);
      if (it == tensors.end()) throw InvalidInput("checkpoint lacks tensor '" + p->name + "'");
      const auto& t = it->second;
      if (t.shape.size() != 2 || t.shape[0] != p->value.rows() || t.shape[1] != p->value.cols())
        throw InvalidInput("checkpoint tensor '" + p->name + "' has the wrong shape");
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<S>(t.data[i]);
    }
  }

  std::string get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw InvalidInput("checkpoint lacks metadata '" + key + "'");
    return it->second;
  }
  int get_int(const std::string& key) const { return std::stoi(get(key)); }
  double get_double(const std::string& key) const { return std::stod(get(key)); }

  void save(const std::filesystem::path& path) const {
    using datakit::detail::put_le;
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
      auto put_str = [&](const std::string& s) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
      };
      out.write("PQCK", 4);
      put_le<std::uint32_t>(out, kVersion);
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
      for (const auto& [k, v] : meta) put_str(k), put_str(v);
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
      for (const auto& [name, t] : tensors) {
        put_str(name);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_le<std::uint32_t>(out, d);
        for (float f : t.data) put_le<float>(out, f);
      }
    }
    std::filesystem::rename(tmp, path);
  }

  static Checkpoint load(const std::filesystem::path& path) {
    using datakit::detail::get_le;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
    const std::string what = path.string();
    auto get_str = [&]() {
      const auto n = get_le<std::uint32_t>(in, what);
      if (n > (1u << 20)) throw InvalidInput("corrupt checkpoint " + what);
      std::string s(n, '\0');
      in.read(s.data(), n);
      if (!in) throw InvalidInput("truncated checkpoint " + what);
      return s;
    };
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "PQCK") throw InvalidInput("bad checkpoint magic: " + what);
    if (get_le<std::uint32_t>(in, what) != kVersion)
      throw InvalidInput("unsupported checkpoint version: " + what);
    Checkpoint ck;
    const auto n_meta = get_le<std::uint32_t>(in, what);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      std::string k = get_str();
      ck.meta[k] = get_str();
    }
    const auto n_t = get_le<std::uint32_t>(in, what);
    for (std::uint32_t i = 0; i < n_t; ++i) {
      std::string name = get_str();
      StoredTensor t;
      const auto nd = get_le<std::uint32_t>(in, what);
      std::size_t count = 1;
      for (std::uint32_t d = 0; d < nd; ++d) {
        t.shape.push_back(get_le<std::uint32_t>(in, what));
        count *= t.shape.back();
      }
      t.data.resize(count);
      for (auto& f : t.data) f = get_le<float>(in, what);
      ck.tensors[name] = std::move(t);
    }
    return ck;
  }
};

}  // namespace pqnet::nn
