#include "syncmask/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace syncmask {

namespace {

constexpr const char* kMagic = "syncmask-checkpoint v1";

static_assert(sizeof(double) == 8);

void put_values(std::ostream& out, const ParameterSet& params) {
    for (const Tensor& t : params.values()) {
        for (const double v : t.data()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            unsigned char bytes[8];
            for (int i = 0; i < 8; ++i) {
                bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
            }
            out.write(reinterpret_cast<const char*>(bytes), 8);
        }
    }
}

void get_values(std::istream& in, ParameterSet& params) {
    for (Tensor& t : params.values()) {
        for (double& v : t.data()) {
            unsigned char bytes[8];
            if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
                throw std::runtime_error("checkpoint: truncated parameter data");
            }
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) {
                bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
            }
            v = std::bit_cast<double>(bits);
        }
    }
}

template <class T>
T header_field(std::istream& in, const char* key) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(std::string("checkpoint: missing field ") + key);
    }
    std::istringstream fields(line);
    std::string got;
    T value{};
    if (!(fields >> got >> value) || got != key) {
        throw std::runtime_error(std::string("checkpoint: expected field ") + key + ", got '" + line + "'");
    }
    return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const DualModel& model) {
    const ModelConfig& c = model.config;
    std::ostringstream head;
    head.precision(17);
    head << kMagic << '\n'
         << "dim " << c.dim << '\n'
         << "heads " << c.heads << '\n'
         << "layers_text " << c.layers_text << '\n'
         << "layers_vision " << c.layers_vision << '\n'
         << "layers_fusion " << c.layers_fusion << '\n'
         << "text_len " << c.text_len << '\n'
         << "patches_per_side " << c.patches_per_side << '\n'
         << "patch_dim " << c.patch_dim << '\n'
         << "vocab_size " << c.vocab_size << '\n'
         << "mask_token_id " << c.mask_token_id << '\n'
         << "cls_token_id " << c.cls_token_id << '\n'
         << "proj_dim " << c.proj_dim << '\n'
         << "init_std " << c.init_std << '\n'
         << "tensors " << model.student.size() << '\n';
    for (std::size_t i = 0; i < model.student.size(); ++i) {
        head << model.student.name(i) << ' ' << shape_string(model.student[i].shape()) << '\n';
    }
    head << "end\n";
    out << head.str();
    put_values(out, model.student);
    put_values(out, model.teacher);
}

DualModel read_checkpoint(std::istream& in) {
    std::string magic;
    std::getline(in, magic);
    if (magic != kMagic) {
        throw std::runtime_error("checkpoint: missing '" + std::string(kMagic) + "' header");
    }
    ModelConfig c;
    c.dim = header_field<int>(in, "dim");
    c.heads = header_field<int>(in, "heads");
    c.layers_text = header_field<int>(in, "layers_text");
    c.layers_vision = header_field<int>(in, "layers_vision");
    c.layers_fusion = header_field<int>(in, "layers_fusion");
    c.text_len = header_field<int>(in, "text_len");
    c.patches_per_side = header_field<int>(in, "patches_per_side");
    c.patch_dim = header_field<int>(in, "patch_dim");
    c.vocab_size = header_field<int>(in, "vocab_size");
    c.mask_token_id = header_field<int>(in, "mask_token_id");
    c.cls_token_id = header_field<int>(in, "cls_token_id");
    c.proj_dim = header_field<int>(in, "proj_dim");
    c.init_std = header_field<double>(in, "init_std");
    c.validate();
    const auto count = header_field<std::size_t>(in, "tensors");

    // Values are overwritten below; the seed only fixes the layout.
    DualModel model = DualModel::create(c, 1.0, 0);
    if (count != model.student.size()) {
        throw std::runtime_error("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                                 std::to_string(model.student.size()));
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        std::getline(in, line);
        const std::string expected = model.student.name(i) + ' ' + shape_string(model.student[i].shape());
        if (line != expected) {
            throw std::runtime_error("checkpoint: tensor " + std::to_string(i) + " is '" + line + "', expected '" +
                                     expected + "'");
        }
    }
    std::string end;
    std::getline(in, end);
    if (end != "end") {
        throw std::runtime_error("checkpoint: header not terminated");
    }
    get_values(in, model.student);
    get_values(in, model.teacher);
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("checkpoint: trailing bytes after parameter data");
    }
    return model;
}

void save_checkpoint(const std::string& path, const DualModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint to " + path);
    }
    write_checkpoint(out, model);
    if (!out) {
        throw std::runtime_error("error writing checkpoint to " + path);
    }
}

DualModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read checkpoint from " + path);
    }
    return read_checkpoint(in);
}

}  // namespace syncmask
