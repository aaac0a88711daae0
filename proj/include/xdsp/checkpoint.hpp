#ifndef XDSP_CHECKPOINT_HPP
#define XDSP_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "xdsp/errors.hpp"
#include "xdsp/model.hpp"
#include "xdsp/tensor.hpp"

namespace xdsp::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlob {
  std::string name;
  std::uint8_t dtype = 1;  // 0 = f32, 1 = f64
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> data;  // raw little-endian scalars, row-major
};

// Bit-exact serialized model: load(save(x)) reproduces every tensor byte.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json metadata;  // config, vocabulary, seed, lineage, training stats
  std::vector<TensorBlob> tensors;

  const TensorBlob& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw FormatError("checkpoint: no tensor named " + name);
  }
};

// Binary layout: magic "XDSP"; version u32; metadata length u64 + UTF-8
// JSON; tensor count u32; per tensor: name length u16 + name, dtype u8,
// rank u8, dims u64 each, raw scalars. All integers little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

template <typename S>
std::vector<TensorBlob> pack_params(model::ModelParams<S>& params) {
  std::vector<TensorBlob> blobs;
  for (auto& [name, tensor] : params.param_refs()) {
    TensorBlob b;
    b.name = name;
    b.dtype = static_cast<std::uint8_t>(num::dtype_of<S>());
    for (num::Index e : tensor->shape()) b.dims.push_back(static_cast<std::uint64_t>(e));
    b.data.resize(static_cast<std::size_t>(tensor->size()) * sizeof(S));
    std::memcpy(b.data.data(), tensor->mat().data(), b.data.size());
    blobs.push_back(std::move(b));
  }
  return blobs;
}

template <typename S>
num::Tensor<S> blob_to_tensor(const TensorBlob& b) {
  if (b.dtype != static_cast<std::uint8_t>(num::dtype_of<S>()))
    throw IncompatibilityError("checkpoint tensor " + b.name + " has dtype code " +
                               std::to_string(b.dtype) + ", expected " +
                               std::to_string(static_cast<int>(num::dtype_of<S>())));
  num::Index rows = 1, cols = 1;
  if (b.dims.size() == 1) {
    rows = static_cast<num::Index>(b.dims[0]);
  } else if (b.dims.size() == 2) {
    rows = static_cast<num::Index>(b.dims[0]);
    cols = static_cast<num::Index>(b.dims[1]);
  } else if (!b.dims.empty()) {
    throw FormatError("checkpoint tensor " + b.name + " has unsupported rank");
  }
  if (b.data.size() != static_cast<std::size_t>(rows * cols) * sizeof(S))
    throw FormatError("checkpoint tensor " + b.name + " has inconsistent payload size");
  num::Mat<S> m(rows, cols);
  std::memcpy(m.data(), b.data.data(), b.data.size());
  if (b.dims.empty()) return num::Tensor<S>::scalar(m(0, 0));
  if (b.dims.size() == 1) return num::Tensor<S>::vector(m);
  return num::Tensor<S>::matrix(std::move(m));
}

template <typename S>
model::ModelParams<S> unpack_params(const Checkpoint& ckpt, num::Index vocab, num::Index d,
                                    num::Index s) {
  model::ModelParams<S> p = model::ModelParams<S>::init(vocab, d, s, 0);
  for (auto& [name, tensor] : p.param_refs()) {
    num::Tensor<S> loaded = blob_to_tensor<S>(ckpt.tensor(name));
    if (!tensor->same_shape(loaded))
      throw IncompatibilityError("checkpoint tensor " + name + " has shape " +
                                 num::shape_str(loaded.shape()) + ", expected " +
                                 num::shape_str(tensor->shape()));
    *tensor = std::move(loaded);
  }
  return p;
}

}  // namespace xdsp::train

#endif
