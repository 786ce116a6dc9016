#include "resdiff/checkpoint.hpp"

#include <cstring>

namespace resdiff::ckpt {

nlohmann::json rdt_config_to_json(const rdt::RdtConfig& cfg) {
    return {{"seq_len", cfg.seq_len},
            {"num_tokens", cfg.num_tokens},
            {"hidden_dim", cfg.hidden_dim},
            {"num_blocks", cfg.num_blocks},
            {"num_heads", cfg.num_heads},
            {"band_radius", cfg.band_radius},
            {"timestep_embed_dim", cfg.timestep_embed_dim},
            {"ablation", cfg.variant_name()}};
}

rdt::RdtConfig rdt_config_from_json(const nlohmann::json& j) {
    rdt::RdtConfig cfg;
    cfg.seq_len = j.value("seq_len", cfg.seq_len);
    cfg.num_tokens = j.value("num_tokens", cfg.num_tokens);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.num_blocks = j.value("num_blocks", cfg.num_blocks);
    cfg.num_heads = j.value("num_heads", cfg.num_heads);
    cfg.band_radius = j.value("band_radius", cfg.band_radius);
    cfg.timestep_embed_dim = j.value("timestep_embed_dim", cfg.timestep_embed_dim);
    cfg = rdt::RdtConfig::make_variant(cfg, j.value("ablation", std::string("none")));
    cfg.validate();
    return cfg;
}

nlohmann::json diffusion_to_json(const diffusion::DiffusionSettings& ds) {
    return {{"T", ds.T},         {"eta1", ds.eta1},   {"etaT", ds.etaT},
            {"p", ds.p},         {"kappa", ds.kappa}, {"sample_steps", ds.sample_steps}};
}

diffusion::DiffusionSettings diffusion_from_json(const nlohmann::json& j) {
    diffusion::DiffusionSettings ds;
    ds.T = j.value("T", ds.T);
    ds.eta1 = j.value("eta1", ds.eta1);
    ds.etaT = j.value("etaT", ds.etaT);
    ds.p = j.value("p", ds.p);
    ds.kappa = j.value("kappa", ds.kappa);
    ds.sample_steps = j.value("sample_steps", ds.sample_steps);
    return ds;
}

CheckpointMeta read_checkpoint_header(std::ifstream& f, const std::string& path) {
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    if (!f || len == 0 || len > (1u << 24)) throw DataError("corrupt checkpoint header: " + path);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw DataError("corrupt checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw DataError("checkpoint header is not valid JSON: " + path);
    if (header.value("format_version", 0) != 1)
        throw DataError("unsupported checkpoint version in " + path);
    CheckpointMeta meta;
    meta.model = rdt_config_from_json(header.at("model"));
    meta.diffusion = diffusion_from_json(header.at("diffusion"));
    meta.epoch = header.value("epoch", 0);
    meta.train_step = header.value("train_step", std::int64_t(0));
    meta.ablation = header.value("ablation", std::string("none"));
    meta.artifact = header.value("artifact", std::string());
    return meta;
}

} // namespace resdiff::ckpt
