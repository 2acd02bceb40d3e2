#include "gavs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace gavs {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'V', 'S', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::ostream& out, U v) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw std::runtime_error("checkpoint truncated");
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint truncated");
    return s;
}

}  // namespace

void save_checkpoint(const GavsModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta =
        nlohmann::json{{"config", to_json(model.config())}, {"audio_dim", model.audio_dim()}}.dump();
    put<std::uint64_t>(out, meta.size());
    put_string(out, meta);
    const auto& params = model.params().all();
    put<std::uint64_t>(out, params.size());
    for (const Parameter& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        put_string(out, p.name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.dim()));
        for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
        for (double v : p.tensor.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::unique_ptr<GavsModel> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw std::runtime_error(path.string() + " is not a GAVS checkpoint");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto meta = nlohmann::json::parse(get_string(in, get<std::uint64_t>(in)));
    auto model = std::make_unique<GavsModel>(run_config_from_json(meta.at("config")),
                                             meta.at("audio_dim").get<std::size_t>());
    const auto count = get<std::uint64_t>(in);
    if (count != model->params().all().size()) {
        throw std::runtime_error("checkpoint has " + std::to_string(count) + " parameters, model has " +
                                 std::to_string(model->params().all().size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = get_string(in, get<std::uint32_t>(in));
        const auto rank = get<std::uint32_t>(in);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in));
        Parameter& p = model->params().get(name);
        if (shape != p.tensor.shape()) {
            throw ShapeError("checkpoint parameter " + name + " has shape " + shape_str(shape) +
                             ", model expects " + shape_str(p.tensor.shape()));
        }
        auto w = p.tensor.mutable_data();
        for (double& v : w) v = std::bit_cast<double>(get<std::uint64_t>(in));
    }
    return model;
}

}  // namespace gavs
