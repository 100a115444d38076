#include <cstring>
#include <fstream>
#include <map>

#include "pafa/model.hpp"

namespace pafa {

namespace {

constexpr char kMagic[4] = {'P', 'A', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ParseError("checkpoint truncated while reading " + what);
  return v;
}

struct RawTensor {
  int rank = 2;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;  // row-major
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());

  std::uint32_t count = 0;
  params.for_each_tensor([&](const std::string&, const MatrixX<float>&, int) { ++count; });

  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, count);
  params.for_each_tensor([&](const std::string& name, const MatrixX<float>& t, int rank) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(rank));
    if (rank == 1) {
      write_u32(out, static_cast<std::uint32_t>(t.rows()));
    } else {
      write_u32(out, static_cast<std::uint32_t>(t.rows()));
      write_u32(out, static_cast<std::uint32_t>(t.cols()));
    }
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) {
        const float v = t(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  });
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a checkpoint file: " + path.string());
  const auto version = read_u32(in, "version");
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = read_u32(in, "tensor count");

  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_u32(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ParseError("checkpoint truncated while reading tensor name");
    RawTensor t;
    t.rank = static_cast<int>(read_u32(in, "rank"));
    if (t.rank < 1 || t.rank > 2) throw ParseError("unsupported tensor rank for '" + name + "'");
    std::size_t total = 1;
    for (int d = 0; d < t.rank; ++d) {
      t.dims.push_back(read_u32(in, "dims"));
      total *= t.dims.back();
    }
    t.data.resize(total);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (!in) throw ParseError("checkpoint truncated while reading tensor data for '" + name + "'");
    tensors.emplace(std::move(name), std::move(t));
  }

  auto take = [&](const std::string& name) -> MatrixX<float> {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("checkpoint is missing tensor '" + name + "'");
    const RawTensor& t = it->second;
    const Index rows = static_cast<Index>(t.dims[0]);
    const Index cols = t.rank == 2 ? static_cast<Index>(t.dims[1]) : 1;
    MatrixX<float> m(rows, cols);
    std::size_t k = 0;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = t.data[k++];
    return m;
  };

  // Shape metadata is reconstructed from the tensors themselves.
  ModelParams<float> params;
  ModelConfig cfg;
  cfg.hidden.clear();
  int layer = 0;
  while (tensors.count("enc." + std::to_string(layer) + ".w")) {
    auto w = take("enc." + std::to_string(layer) + ".w");
    auto b = take("enc." + std::to_string(layer) + ".b");
    if (layer == 0) cfg.mels = static_cast<int>(w.cols()) / 2;
    cfg.hidden.push_back(static_cast<int>(w.rows()));
    params.mutable_enc_w().push_back(std::move(w));
    params.mutable_enc_b().push_back(std::move(b));
    ++layer;
  }
  if (layer == 0) throw ParseError("checkpoint has no encoder tensors");
  params.mutable_cls_w() = take("cls.w");
  params.mutable_cls_b() = take("cls.b");
  cfg.n_classes = static_cast<int>(params.cls_w().rows());

  const bool has_projection = tensors.count("proj.0.w") > 0;
  if (has_projection) {
    params.mutable_proj_w1() = take("proj.0.w");
    params.mutable_proj_b1() = take("proj.0.b");
    params.mutable_proj_w2() = take("proj.1.w");
    params.mutable_proj_b2() = take("proj.1.b");
    cfg.proj_dim = static_cast<int>(params.proj_w2().rows());
  }
  params.set_config(cfg, has_projection);
  return params;
}

}  // namespace pafa
