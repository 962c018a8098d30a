#include "creole/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "creole/error.hpp"

namespace creole {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'L', 'M', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(bytes, sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& path) {
  char bytes[sizeof(U)];
  if (!in.read(bytes, sizeof(U))) throw FormatError(path, 0, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw FormatError(path, 0, "implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw FormatError(path, 0, "truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, params.preset.name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.preset.layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.preset.d_model));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.preset.heads));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.preset.max_len));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.vocab_size));
  put<std::uint64_t>(out, params.seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    put_string(out, t.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    for (float v : t.values) put<float>(out, v);
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + p + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(p, 0, "not a checkpoint (bad magic)");
  if (get<std::uint32_t>(in, p) != kCheckpointVersion)
    throw FormatError(p, 0, "unsupported checkpoint version");
  SizePreset preset;
  preset.name = get_string(in, p);
  preset.layers = static_cast<int>(get<std::uint32_t>(in, p));
  preset.d_model = static_cast<int>(get<std::uint32_t>(in, p));
  preset.heads = static_cast<int>(get<std::uint32_t>(in, p));
  preset.max_len = static_cast<int>(get<std::uint32_t>(in, p));
  const auto vocab_size = get<std::uint32_t>(in, p);
  const auto seed = get<std::uint64_t>(in, p);
  EncoderParams params;
  try {
    params = allocate_parameters<float>(preset, vocab_size);
  } catch (const std::invalid_argument& e) {
    throw FormatError(p, 0, e.what());
  }
  params.seed = seed;
  if (get<std::uint32_t>(in, p) != params.tensors.size())
    throw FormatError(p, 0, "tensor count does not match the preset");
  for (auto& t : params.tensors) {
    if (get_string(in, p) != t.name) throw FormatError(p, 0, "unexpected tensor '" + t.name + "'");
    const auto rank = get<std::uint32_t>(in, p);
    if (rank != t.shape.size()) throw FormatError(p, 0, "rank mismatch for '" + t.name + "'");
    for (auto dim : t.shape)
      if (get<std::uint32_t>(in, p) != dim) throw FormatError(p, 0, "shape mismatch for '" + t.name + "'");
    for (auto& v : t.values) v = get<float>(in, p);
  }
  return params;
}

}  // namespace creole
