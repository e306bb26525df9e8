#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fixpoint/elman.hpp"

namespace fixpoint {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

void write_tensors(std::ostream& out, const std::vector<std::span<const double>>& tensors) {
  for (auto t : tensors) {
    for (double d : t) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(d));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }
}

void read_tensors(std::istream& in, const std::vector<std::span<double>>& tensors) {
  for (auto t : tensors) {
    for (double& d : t) {
      char buf[8];
      if (!in.read(buf, 8)) throw DataError("tensor data truncated");
      std::uint64_t bits = 0;
      std::memcpy(&bits, buf, 8);
      d = std::bit_cast<double>(to_little_endian(bits));
    }
  }
}

void save_model(std::ostream& out, const ModelParams& p) {
  p.validate();
  out << "fixpoint-model v1 " << p.hidden() << ' ' << p.input_dim() << ' ' << p.vocab() << ' '
      << to_string(p.activation) << ' ' << (p.has_bias() ? 1 : 0) << '\n';
  write_tensors(out, p.tensors());
}

void save_model(const std::filesystem::path& path, const ModelParams& p) {
  write_file_atomic(path, [&](std::ostream& out) { save_model(out, p); });
}

ModelParams load_model(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty model file");
  std::istringstream hs(header);
  std::string magic, version, act;
  std::size_t h = 0, e = 0, v = 0;
  int bias = 0;
  if (!(hs >> magic >> version >> h >> e >> v >> act >> bias) || magic != "fixpoint-model" ||
      version != "v1" || (bias != 0 && bias != 1)) {
    throw DataError("not a fixpoint-model v1 file");
  }
  Activation a;
  try {
    a = parse_activation(act);
  } catch (const std::invalid_argument& ex) {
    throw DataError(ex.what());
  }
  ModelParams p = ModelParams::zeros(h, v, a, bias == 1, e == v ? 0 : e);
  read_tensors(in, p.tensors());
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in model file");
  return p;
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return load_model(in);
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fixpoint
