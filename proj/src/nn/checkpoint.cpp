#include "rsvqa/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::nn {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'V', 'Q', 'A', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

Checkpoint Checkpoint::capture(nlohmann::json header, const ParameterList& params) {
  Checkpoint ck;
  ck.header = std::move(header);
  for (const auto& p : params) {
    if (!ck.tensors.emplace(p.name, StoredTensor{p.tensor.shape(), p.tensor.values()}).second) {
      throw InvalidInput("duplicate parameter name " + p.name);
    }
  }
  return ck;
}

void Checkpoint::restore(const ParameterList& params) const {
  for (const auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw DataError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second.shape != p.tensor.shape()) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + shape_string(it->second.shape) +
                      ", model expects " + shape_string(p.tensor.shape()));
    }
  }
  for (const auto& p : params) {
    const auto& src = tensors.at(p.name).values;
    auto dst = Tensor(p.tensor).data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string header = checkpoint.header.dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_u64(out, checkpoint.tensors.size());
  for (const auto& [name, t] : checkpoint.tensors) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, t.shape.size());
    for (auto d : t.shape) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  Checkpoint ck;
  std::string header(read_u64(in, path), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!in) throw DataError("truncated checkpoint header in " + path.string());
  try {
    ck.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  const auto count = read_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_u64(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    StoredTensor t;
    t.shape.resize(read_u64(in, path));
    for (auto& d : t.shape) d = read_u64(in, path);
    t.values.resize(shape_numel(t.shape));
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw DataError("truncated tensor '" + name + "' in " + path.string());
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace rsvqa::nn
