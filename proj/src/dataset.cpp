#include "resdiff/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

namespace resdiff::data {

std::vector<int> Dataset::unique_scenes() const {
    std::set<int> s(scene_ids.begin(), scene_ids.end());
    return {s.begin(), s.end()};
}

void write_segments_csv(const std::string& path, const std::vector<signal::PairedSegment>& segs) {
    if (segs.empty()) throw DataError("no segments to write");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    const Eigen::Index l = segs.front().y.size();
    const bool with_truth = segs.front().x.size() > 0;
    std::fputs("idx", f);
    for (Eigen::Index i = 0; i < l; ++i) std::fprintf(f, ",y_%ld", static_cast<long>(i));
    if (with_truth)
        for (Eigen::Index i = 0; i < l; ++i) std::fprintf(f, ",x_%ld", static_cast<long>(i));
    std::fputc('\n', f);
    for (std::size_t r = 0; r < segs.size(); ++r) {
        if (segs[r].y.size() != l || (with_truth && segs[r].x.size() != l)) {
            std::fclose(f);
            throw DataError("segment length mismatch at row " + std::to_string(r));
        }
        std::fprintf(f, "%zu", r);
        for (Eigen::Index i = 0; i < l; ++i) std::fprintf(f, ",%.9g", segs[r].y[i]);
        if (with_truth)
            for (Eigen::Index i = 0; i < l; ++i) std::fprintf(f, ",%.9g", segs[r].x[i]);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

} // namespace

std::vector<signal::PairedSegment> load_segments_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty segment file: " + path);
    auto header = split_csv_line(line);
    int n_y = 0, n_x = 0;
    for (const auto& h : header) {
        if (h.rfind("y_", 0) == 0) ++n_y;
        if (h.rfind("x_", 0) == 0) ++n_x;
    }
    if (n_y == 0 || (n_x != 0 && n_x != n_y))
        throw DataError("malformed segment header in " + path);
    std::vector<signal::PairedSegment> segs;
    std::size_t row = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != 1 + n_y + n_x)
            throw DataError("row " + std::to_string(row) + " of " + path +
                            " has wrong field count");
        Vec y(n_y), x(n_x);
        for (int i = 0; i < n_y; ++i) y[i] = std::stod(fields[1 + i]);
        for (int i = 0; i < n_x; ++i) x[i] = std::stod(fields[1 + n_y + i]);
        segs.emplace_back(std::move(y), std::move(x));
        ++row;
    }
    if (segs.empty()) throw DataError("no segments in " + path);
    return segs;
}

void write_cube(const std::string& base_path, const signal::RadarCube& cube) {
    const std::string bin_path = base_path + ".bin";
    std::FILE* f = std::fopen(bin_path.c_str(), "wb");
    if (!f) throw DataError("cannot write " + bin_path);
    std::vector<float> frame(static_cast<std::size_t>(cube.adc_samples()) * 2);
    for (int k = 0; k < cube.n_frames(); ++k) {
        for (int n = 0; n < cube.adc_samples(); ++n) {
            frame[2 * n] = static_cast<float>(cube.iq(n, k).real());
            frame[2 * n + 1] = static_cast<float>(cube.iq(n, k).imag());
        }
        std::fwrite(frame.data(), sizeof(float), frame.size(), f);
    }
    std::fclose(f);

    nlohmann::json side = {{"frames", cube.n_frames()},
                           {"adc_samples", cube.adc_samples()},
                           {"sample_rate_hz", cube.sample_rate_hz},
                           {"frame_period_s", cube.frame_period_s},
                           {"bandwidth_hz", cube.bandwidth_hz},
                           {"carrier_hz", cube.carrier_hz}};
    std::ofstream js(base_path + ".json");
    if (!js) throw DataError("cannot write " + base_path + ".json");
    js << side.dump(2) << "\n";
}

signal::RadarCube load_cube(const std::string& base_path) {
    std::ifstream js(base_path + ".json");
    if (!js) throw DataError("cannot open " + base_path + ".json");
    nlohmann::json side = nlohmann::json::parse(js, nullptr, false);
    if (side.is_discarded()) throw DataError("invalid cube sidecar: " + base_path + ".json");

    signal::RadarCube cube;
    const int n_frames = side.at("frames").get<int>();
    const int adc = side.at("adc_samples").get<int>();
    if (n_frames <= 0 || adc <= 0) throw DataError("invalid cube dimensions in sidecar");
    cube.sample_rate_hz = side.at("sample_rate_hz").get<double>();
    cube.frame_period_s = side.at("frame_period_s").get<double>();
    cube.bandwidth_hz = side.at("bandwidth_hz").get<double>();
    cube.carrier_hz = side.at("carrier_hz").get<double>();

    std::ifstream f(base_path + ".bin", std::ios::binary);
    if (!f) throw DataError("cannot open " + base_path + ".bin");
    cube.iq.resize(adc, n_frames);
    std::vector<float> frame(static_cast<std::size_t>(adc) * 2);
    for (int k = 0; k < n_frames; ++k) {
        f.read(reinterpret_cast<char*>(frame.data()),
               static_cast<std::streamsize>(frame.size() * sizeof(float)));
        if (!f) throw DataError("cube data truncated: " + base_path + ".bin");
        for (int n = 0; n < adc; ++n)
            cube.iq(n, k) = std::complex<double>(frame[2 * n], frame[2 * n + 1]);
    }
    return cube;
}

} // namespace resdiff::data
