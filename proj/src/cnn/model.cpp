// SPDX-License-Identifier: Apache-2.0
#include "harmodop/cnn/model.hpp"

#include "harmodop/binary_io.hpp"
#include "harmodop/error.hpp"

namespace harmodop::cnn {

namespace {

constexpr char kMagic[] = "HMNN";

void put_spec(io::ByteWriter& w, const NetworkSpec& spec)
{
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.precision));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input_size));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.conv_blocks.size()));
    for (const auto& b : spec.conv_blocks) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.filters));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.kernel));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(b.activation));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.pool.window));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.pool.stride));
    w.put<std::uint8_t>(spec.pool.same_padding ? 1 : 0);
    w.put<double>(spec.dropout_rate);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.dense_widths.size()));
    for (auto width : spec.dense_widths) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
    }
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.output_activation));
}

NetworkSpec get_spec(io::ByteReader& r)
{
    constexpr std::uint32_t kSane = 1u << 16;
    auto bounded = [&](const char* what) {
        const auto v = r.get<std::uint32_t>();
        if (v > kSane) {
            throw FormatError(std::string("model file: implausible ") + what + " " + std::to_string(v));
        }
        return static_cast<std::size_t>(v);
    };
    NetworkSpec spec;
    const auto prec = r.get<std::uint8_t>();
    if (prec != static_cast<std::uint8_t>(Precision::f32) && prec != static_cast<std::uint8_t>(Precision::f64)) {
        throw FormatError("model file: unknown precision flag " + std::to_string(prec));
    }
    spec.precision = static_cast<Precision>(prec);
    spec.input_size = bounded("input size");
    spec.conv_blocks.resize(bounded("conv block count"));
    for (auto& b : spec.conv_blocks) {
        b.filters = bounded("filter count");
        b.kernel = bounded("kernel size");
        b.activation = static_cast<Activation>(r.get<std::uint8_t>());
    }
    spec.pool.window = bounded("pool window");
    spec.pool.stride = bounded("pool stride");
    spec.pool.same_padding = r.get<std::uint8_t>() != 0;
    spec.dropout_rate = r.get<double>();
    spec.dense_widths.resize(bounded("dense layer count"));
    for (auto& width : spec.dense_widths) {
        width = bounded("dense width");
    }
    spec.output_activation = static_cast<Activation>(r.get<std::uint8_t>());
    try {
        spec.validate();
    } catch (const DomainError& e) {
        throw FormatError(std::string("model file: invalid architecture: ") + e.what());
    }
    return spec;
}

template <typename T>
Network<T> get_network(io::ByteReader& r, NetworkSpec spec)
{
    const auto count = r.get<std::uint64_t>();
    if (count != spec.parameter_count()) {
        throw FormatError("model file: parameter count " + std::to_string(count) + " does not match architecture (" +
                          std::to_string(spec.parameter_count()) + ")");
    }
    if (r.remaining() != count * sizeof(T)) {
        throw FormatError("model file: payload size does not match parameter count");
    }
    std::vector<Tensor<T>> params;
    for (const auto& shape : parameter_shapes(spec)) {
        Tensor<T> t(shape);
        for (auto& x : t.data) {
            x = r.get<T>();
        }
        params.push_back(std::move(t));
    }
    return Network<T>(std::move(spec), std::move(params));
}

}  // namespace

Model make_model(const NetworkSpec& spec, std::uint64_t seed)
{
    if (spec.precision == Precision::f32) {
        return Network<float>(spec, seed);
    }
    return Network<double>(spec, seed);
}

const NetworkSpec& model_spec(const Model& model)
{
    return std::visit([](const auto& net) -> const NetworkSpec& { return net.spec(); }, model);
}

std::vector<std::uint8_t> encode_model(const Model& model)
{
    io::ByteWriter w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put<std::uint16_t>(kModelVersion);
    std::visit(
        [&](const auto& net) {
            put_spec(w, net.spec());
            w.put<std::uint64_t>(net.spec().parameter_count());
            for (const auto& p : net.parameters()) {
                for (auto x : p.data) {
                    w.put(x);
                }
            }
        },
        model);
    w.put<std::uint32_t>(io::crc32(w.bytes()));
    return std::move(w.bytes());
}

Model decode_model(std::span<const std::uint8_t> bytes)
{
    constexpr std::size_t kHeader = 4 + 2;
    if (bytes.size() < kHeader + 4) {
        throw FormatError("model file: truncated (" + std::to_string(bytes.size()) + " bytes)");
    }
    const auto body = bytes.first(bytes.size() - 4);
    io::ByteReader tail(bytes.last(4), "model checksum");
    if (tail.get<std::uint32_t>() != io::crc32(body)) {
        throw FormatError("model file: checksum mismatch (corrupt or truncated)");
    }
    io::ByteReader r(body, "model file");
    if (r.get_bytes(4) != std::string_view(kMagic, 4)) {
        throw FormatError("model file: bad magic");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kModelVersion) {
        throw FormatError("model file: unsupported version " + std::to_string(version));
    }
    NetworkSpec spec = get_spec(r);
    if (spec.precision == Precision::f32) {
        return get_network<float>(r, std::move(spec));
    }
    return get_network<double>(r, std::move(spec));
}

void save_model(const Model& model, const std::filesystem::path& path)
{
    io::write_file(path, encode_model(model));
}

Model load_model(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    try {
        return decode_model(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

ClassDecision classify(const Model& model, const dsp::SpectrogramImage& image, double hidden_threshold)
{
    const auto& spec = model_spec(model);
    if (image.n != spec.input_size || image.pixels.size() != image.n * image.n) {
        throw DomainError("image is " + std::to_string(image.n) + "x" + std::to_string(image.n) +
                          ", model expects " + std::to_string(spec.input_size) + "x" +
                          std::to_string(spec.input_size));
    }
    return std::visit([&](const auto& net) { return net.classify(image.pixels, hidden_threshold); }, model);
}

}  // namespace harmodop::cnn
