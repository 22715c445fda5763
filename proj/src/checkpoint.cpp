#include "wtal/checkpoint.hpp"

#include "wtal/binio.hpp"

namespace wtal::io {

namespace {

constexpr char kMagic[] = "WTALCKPT";  // stored with its trailing NUL
constexpr std::size_t kMagicLen = 9;
constexpr std::uint8_t kVersion = 1;

}  // namespace

std::string serialize_params(const std::vector<ad::TensorPtr>& params) {
  std::string out;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.append(p->name);
    put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->data) put_f64(out, v);
  }
  return out;
}

std::string encode_checkpoint(const std::vector<ad::TensorPtr>& params,
                              const CheckpointMeta& meta) {
  std::string out;
  out.append(kMagic, kMagicLen);
  put_u8(out, kVersion);
  put_u64(out, meta.config_hash);
  put_u64(out, meta.data_hash);
  put_u64(out, meta.frozen_hash);
  out += serialize_params(params);
  return out;
}

CheckpointMeta decode_checkpoint(const std::string& bytes,
                                 const std::vector<ad::TensorPtr>& params,
                                 const std::string& context) {
  Reader r(bytes, context);
  if (r.raw(kMagicLen, "magic") != std::string(kMagic, kMagicLen))
    throw FormatError(context + ": bad magic, not a checkpoint file");
  const std::uint8_t version = r.u8("version");
  if (version != kVersion)
    throw FormatError(context + ": unsupported checkpoint version " +
                      std::to_string(version));
  CheckpointMeta meta;
  meta.config_hash = r.u64("config hash");
  meta.data_hash = r.u64("data hash");
  meta.frozen_hash = r.u64("frozen-weight hash");

  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size())
    throw FormatError(context + ": checkpoint holds " + std::to_string(count) +
                      " parameters, model expects " +
                      std::to_string(params.size()));
  std::vector<bool> seen(params.size(), false);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    const std::string name = r.raw(name_len, "parameter name");
    ad::TensorPtr target;
    for (std::size_t j = 0; j < params.size(); ++j) {
      if (params[j]->name == name) {
        if (seen[j])
          throw FormatError(context + ": duplicate parameter '" + name + "'");
        seen[j] = true;
        target = params[j];
        break;
      }
    }
    if (!target)
      throw FormatError(context + ": unknown parameter '" + name + "'");
    const std::uint32_t rank = r.u32("rank");
    if (rank != target->shape.size())
      throw FormatError(context + ": rank mismatch for '" + name + "'");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("dimension");
      if (static_cast<int>(dim) != target->shape[d])
        throw FormatError(context + ": shape mismatch for '" + name + "'");
      n *= dim;
    }
    r.f64_array(target->data.data(), n, "parameter payload");
  }
  r.expect_end();
  return meta;
}

void save_checkpoint(const std::string& path,
                     const std::vector<ad::TensorPtr>& params,
                     const CheckpointMeta& meta) {
  write_file(path, encode_checkpoint(params, meta));
}

CheckpointMeta load_checkpoint(const std::string& path,
                               const std::vector<ad::TensorPtr>& params) {
  return decode_checkpoint(read_file(path), params, path);
}

}  // namespace wtal::io
