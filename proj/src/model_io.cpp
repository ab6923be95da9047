#include "moevd/model_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>

#include "moevd/error.hpp"

namespace moevd::learn {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ParseError("base64: length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            int d;
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                d = 0;
                ++pad;
            } else {
                d = decode_char(c);
                if (d < 0 || pad) throw ParseError("base64: invalid character");
            }
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out += static_cast<char>((v >> 16) & 0xFF);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
        if (pad < 1) out += static_cast<char>(v & 0xFF);
    }
    return out;
}

std::string pack_floats(const std::vector<double>& values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    return out;
}

std::vector<double> unpack_floats(std::string_view bytes) {
    if (bytes.size() % 4 != 0) throw ParseError("float array: byte length not a multiple of 4");
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

nlohmann::ordered_json encoder_to_json(const features::EncoderConfig& cfg) {
    nlohmann::ordered_json j;
    j["encoder"] = cfg.encoder;
    j["dim"] = cfg.dim;
    j["n_max"] = cfg.n_max;
    j["hash_seed"] = cfg.hash_seed;
    return j;
}

features::EncoderConfig encoder_from_json(const nlohmann::json& j) {
    features::EncoderConfig cfg;
    cfg.encoder = j.value("encoder", cfg.encoder);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.n_max = j.value("n_max", cfg.n_max);
    cfg.hash_seed = j.value("hash_seed", cfg.hash_seed);
    return cfg;
}

nlohmann::ordered_json loss_spec_to_json(const LossSpec& spec) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(spec.kind);
    if (spec.kind == LossKind::focal) {
        j["gamma"] = spec.gamma;
        j["alpha"] = spec.alpha;
    }
    return j;
}

LossSpec loss_spec_from_json(const nlohmann::json& j) {
    LossSpec spec;
    spec.kind = parse_loss_kind(j.value("kind", std::string("binary_ce")));
    spec.gamma = j.value("gamma", 1.0);
    if (j.contains("alpha")) spec.alpha = j["alpha"].get<std::vector<double>>();
    return spec;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["learning_rate"] = cfg.learning_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_epsilon"] = cfg.adam_epsilon;
    j["seed"] = cfg.seed;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_epsilon = j.value("adam_epsilon", cfg.adam_epsilon);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

std::string to_json(const ModelFile& file) {
    const Model& m = file.model;
    nlohmann::ordered_json j;
    j["version"] = ModelFile::kVersion;
    j["kind"] = to_string(m.kind);
    j["dims"] = {{"input", m.input_dim}, {"hidden", m.hidden_dim}, {"output", m.out_dim}};
    j["loss_spec"] = loss_spec_to_json(file.loss);
    nlohmann::ordered_json w;
    w["w1"] = base64_encode(pack_floats(m.w1));
    w["b1"] = base64_encode(pack_floats(m.b1));
    if (m.kind == ModelKind::mlp1) {
        w["w2"] = base64_encode(pack_floats(m.w2));
        w["b2"] = base64_encode(pack_floats(m.b2));
    }
    j["weights"] = w;
    j["encoder"] = file.encoder ? encoder_to_json(*file.encoder) : nlohmann::ordered_json();
    j["train_config"] = train_config_to_json(file.train);
    j["seed"] = file.train.seed;
    return j.dump() + "\n";
}

ModelFile model_file_from_json(std::string_view text) {
    ModelFile file;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != ModelFile::kVersion)
            throw ParseError("unsupported model file version " + j.at("version").dump());
        Model& m = file.model;
        m.kind = parse_model_kind(j.at("kind").get<std::string>());
        m.input_dim = j.at("dims").at("input").get<std::size_t>();
        m.hidden_dim = j.at("dims").at("hidden").get<std::size_t>();
        m.out_dim = j.at("dims").at("output").get<std::size_t>();
        const auto& w = j.at("weights");
        m.w1 = unpack_floats(base64_decode(w.at("w1").get<std::string>()));
        m.b1 = unpack_floats(base64_decode(w.at("b1").get<std::string>()));
        if (m.kind == ModelKind::mlp1) {
            m.w2 = unpack_floats(base64_decode(w.at("w2").get<std::string>()));
            m.b2 = unpack_floats(base64_decode(w.at("b2").get<std::string>()));
        }
        const std::size_t width = m.first_layer_width();
        const bool dims_ok = m.w1.size() == m.input_dim * width && m.b1.size() == width &&
                             (m.kind == ModelKind::linear ||
                              (m.w2.size() == m.hidden_dim * m.out_dim && m.b2.size() == m.out_dim));
        if (!dims_ok) throw ShapeError("model file: weight array sizes do not match dims");
        file.loss = loss_spec_from_json(j.at("loss_spec"));
        file.train = train_config_from_json(j.at("train_config"));
        file.train.loss = file.loss;
        if (j.contains("encoder") && !j["encoder"].is_null()) file.encoder = encoder_from_json(j["encoder"]);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
    return file;
}

}  // namespace moevd::learn
