#ifndef RESDIFF_CHECKPOINT_HPP
#define RESDIFF_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdiff/diffusion.hpp"
#include "resdiff/rdt.hpp"
#include "resdiff/types.hpp"
#include "resdiff/version.hpp"

namespace resdiff::ckpt {

// Versioned container: 8-byte magic, u32 header length, JSON header (config +
// parameter manifest + training progress), then raw little-endian f32 tensors
// in manifest order.
inline constexpr char kMagic[8] = {'R', 'D', 'T', 'C', 'K', 'P', 'T', '1'};

nlohmann::json rdt_config_to_json(const rdt::RdtConfig& cfg);
rdt::RdtConfig rdt_config_from_json(const nlohmann::json& j);
nlohmann::json diffusion_to_json(const diffusion::DiffusionSettings& ds);
diffusion::DiffusionSettings diffusion_from_json(const nlohmann::json& j);

struct CheckpointMeta {
    rdt::RdtConfig model;
    diffusion::DiffusionSettings diffusion;
    int epoch = 0;
    std::int64_t train_step = 0;
    std::string ablation = "none";
    std::string artifact = kVersion;
};

template <class S>
void save_checkpoint(const std::string& path, const rdt::RdtModel<S>& model,
                     const diffusion::DiffusionSettings& ds, int epoch,
                     std::int64_t train_step) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["artifact"] = kVersion;
    header["model"] = rdt_config_to_json(model.config());
    header["diffusion"] = diffusion_to_json(ds);
    header["epoch"] = epoch;
    header["train_step"] = train_step;
    header["ablation"] = model.config().variant_name();
    header["dtype"] = "f32";
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& spec : model.params().manifest())
        manifest.push_back({{"name", spec.name}, {"rows", spec.rows}, {"cols", spec.cols}});
    header["params"] = manifest;
    header["param_count"] = model.params().size();

    const std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf(static_cast<std::size_t>(model.params().size()));
    for (Eigen::Index i = 0; i < model.params().size(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(model.params().flat()[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw DataError("checkpoint write failed: " + path);
}

CheckpointMeta read_checkpoint_header(std::ifstream& f, const std::string& path);

template <class S>
std::pair<rdt::RdtModel<S>, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    CheckpointMeta meta = read_checkpoint_header(f, path);
    rdt::RdtModel<S> model(meta.model);
    std::vector<float> buf(static_cast<std::size_t>(model.params().size()));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw DataError("checkpoint payload truncated: " + path);
    for (Eigen::Index i = 0; i < model.params().size(); ++i)
        model.params().flat()[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
    return {std::move(model), std::move(meta)};
}

} // namespace resdiff::ckpt

#endif
