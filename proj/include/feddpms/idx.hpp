#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "feddpms/data.hpp"

namespace feddpms {

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// IDX (MNIST/FMNIST) ingestion: big-endian magic and dims, unsigned byte
// payloads. Pixels scaled to [0,1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, "image magic");
    if (img_magic != 0x00000803u)
        throw std::runtime_error("idx: bad image magic " + std::to_string(img_magic));
    const std::uint32_t lab_magic = detail::read_be32(lab, "label magic");
    if (lab_magic != 0x00000801u)
        throw std::runtime_error("idx: bad label magic " + std::to_string(lab_magic));

    const std::uint32_t n_img = detail::read_be32(img, "image count");
    const std::uint32_t rows = detail::read_be32(img, "rows");
    const std::uint32_t cols = detail::read_be32(img, "cols");
    const std::uint32_t n_lab = detail::read_be32(lab, "label count");
    if (n_img != n_lab)
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n_img) +
                                 " vs " + std::to_string(n_lab) + ")");

    const std::size_t dim = std::size_t(rows) * cols;
    Dataset d;
    d.class_count = 10;
    d.samples.reserve(n_img);
    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), long(dim));
        if (!img) throw std::runtime_error("idx: truncated image payload at sample " + std::to_string(i));
        int label = lab.get();
        if (label == EOF) throw std::runtime_error("idx: truncated label payload at sample " + std::to_string(i));
        if (label < 0 || label > 9) throw std::runtime_error("idx: label out of range");
        Sample s;
        s.label = label;
        s.features = Tensor::vector(dim);
        for (std::size_t j = 0; j < dim; ++j) s.features[j] = double(buf[j]) / 255.0;
        d.samples.push_back(std::move(s));
    }
    return d;
}

}  // namespace feddpms
