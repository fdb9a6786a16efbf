// model_io.cc

#include "tsesv/model_io.hpp"

#include <cstring>
#include <fstream>

namespace tsesv {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'T', 'S', 'V', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

const NamedTensor& TensorContainer::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw InputError("tensor not in container: " + name);
}

void save_container(const std::string& path, const TensorContainer& c) {
  json header;
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  json manifest = json::array();
  for (const auto& t : c.tensors) {
    manifest.push_back({{"name", t.name},
                        {"rows", t.value.rows()},
                        {"cols", t.value.cols()},
                        {"dtype", t.dtype == Dtype::f32 ? "f32" : "f64"}});
  }
  header["tensors"] = manifest;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write model file: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  // Row-major little-endian payload.
  for (const auto& t : c.tensors) {
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index cidx = 0; cidx < t.value.cols(); ++cidx) {
        if (t.dtype == Dtype::f32) {
          float v = static_cast<float>(t.value(r, cidx));
          out.write(reinterpret_cast<char*>(&v), sizeof(v));
        } else {
          double v = t.value(r, cidx);
          out.write(reinterpret_cast<char*>(&v), sizeof(v));
        }
      }
    }
  }
  if (!out) throw InputError("short write on model file: " + path);
}

TensorContainer load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("model file not found: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("not a model container: " + path);
  std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw InputError("unsupported model format version " + std::to_string(version) + ": " + path);
  std::uint32_t hlen = get_u32(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw InputError("truncated model header: " + path);
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw InputError("malformed model header: " + path);

  TensorContainer c;
  c.kind = header.at("kind").get<std::string>();
  c.meta = header.value("meta", json::object());
  for (const auto& m : header.at("tensors")) {
    NamedTensor t;
    t.name = m.at("name").get<std::string>();
    const Eigen::Index rows = m.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = m.at("cols").get<Eigen::Index>();
    t.dtype = (m.at("dtype").get<std::string>() == "f64") ? Dtype::f64 : Dtype::f32;
    t.value.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index cidx = 0; cidx < cols; ++cidx) {
        if (t.dtype == Dtype::f32) {
          float v;
          in.read(reinterpret_cast<char*>(&v), sizeof(v));
          t.value(r, cidx) = static_cast<double>(v);
        } else {
          double v;
          in.read(reinterpret_cast<char*>(&v), sizeof(v));
          t.value(r, cidx) = v;
        }
      }
    }
    if (!in) throw InputError("truncated model payload: " + path);
    c.tensors.push_back(std::move(t));
  }
  return c;
}

}  // namespace tsesv
