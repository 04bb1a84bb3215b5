#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/linalg.hpp"
#include "ccp/rng.hpp"

namespace ccp {

struct Dataset {
    Matrix inputs;            // N x d0, values in [0, 1] for image data
    std::vector<int> labels;  // N, contiguous from 0
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;

    std::size_t size() const { return inputs.rows; }
    std::size_t input_dim() const { return inputs.cols; }
    int num_classes() const {
        int c = 0;
        for (int l : labels) c = std::max(c, l + 1);
        return c;
    }
};

namespace detail {
inline std::uint32_t read_be_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("idx: truncated file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
inline void write_be_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace detail

// MNIST-style IDX pair: images (magic 2051) + labels (magic 2049). Pixels are
// scaled by 1/255 and flattened row-major.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be_u32(imgs, "image magic");
    if (img_magic != 2051)
        throw std::runtime_error("idx: wrong image magic " + std::to_string(img_magic) +
                                 " (expected 2051)");
    const std::uint32_t n_images = detail::read_be_u32(imgs, "image count");
    const std::uint32_t rows = detail::read_be_u32(imgs, "image rows");
    const std::uint32_t cols = detail::read_be_u32(imgs, "image cols");

    const std::uint32_t lab_magic = detail::read_be_u32(labs, "label magic");
    if (lab_magic != 2049)
        throw std::runtime_error("idx: wrong label magic " + std::to_string(lab_magic) +
                                 " (expected 2049)");
    const std::uint32_t n_labels = detail::read_be_u32(labs, "label count");
    if (n_images != n_labels)
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n_images) +
                                 " vs " + std::to_string(n_labels) + ")");

    Dataset ds;
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    ds.inputs = Matrix(n_images, dim);
    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        if (!imgs) throw std::runtime_error("idx: truncated image data");
        double* row = ds.inputs.row(i);
        for (std::size_t k = 0; k < dim; ++k) row[k] = buf[k] / 255.0;
    }
    ds.labels.resize(n_labels);
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        unsigned char c;
        labs.read(reinterpret_cast<char*>(&c), 1);
        if (!labs) throw std::runtime_error("idx: truncated label data");
        ds.labels[i] = c;
    }
    return ds;
}

// Inverse of load_idx; rows x cols must multiply to the input dim.
inline void save_idx(const Dataset& ds, std::uint32_t rows, std::uint32_t cols,
                     const std::string& images_path, const std::string& labels_path) {
    if (static_cast<std::size_t>(rows) * cols != ds.input_dim())
        throw std::invalid_argument("save_idx: rows*cols != input dim");
    std::ofstream imgs(images_path, std::ios::binary);
    std::ofstream labs(labels_path, std::ios::binary);
    detail::write_be_u32(imgs, 2051);
    detail::write_be_u32(imgs, static_cast<std::uint32_t>(ds.size()));
    detail::write_be_u32(imgs, rows);
    detail::write_be_u32(imgs, cols);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* row = ds.inputs.row(i);
        for (std::size_t k = 0; k < ds.input_dim(); ++k) {
            const double v = row[k] * 255.0;
            imgs.put(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
        }
    }
    detail::write_be_u32(labs, 2049);
    detail::write_be_u32(labs, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) labs.put(static_cast<char>(static_cast<unsigned char>(l)));
    if (!imgs || !labs) throw std::runtime_error("save_idx: write failed");
}

// Isotropic Gaussian blobs; class means drawn uniformly on a sphere.
inline Dataset synth_blobs(int num_classes, std::size_t per_class, std::size_t dim,
                           double spread, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("synth_blobs: need >= 2 classes");
    if (per_class < 2) throw std::invalid_argument("synth_blobs: need >= 2 per class");
    if (dim == 0) throw std::invalid_argument("synth_blobs: dim = 0");
    auto rng = substream(seed, "data");

    Matrix means(num_classes, dim);
    for (int c = 0; c < num_classes; ++c) {
        Vec dir(dim);
        double n2 = 0.0;
        do {
            for (double& v : dir) v = normal(rng);
            n2 = dot(dir, dir);
        } while (n2 == 0.0);
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t d = 0; d < dim; ++d) means(c, d) = dir[d] * inv;
    }

    Dataset ds;
    ds.inputs = Matrix(static_cast<std::size_t>(num_classes) * per_class, dim);
    ds.labels.resize(ds.inputs.rows);
    std::size_t idx = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s, ++idx) {
            double* row = ds.inputs.row(idx);
            for (std::size_t d = 0; d < dim; ++d) row[d] = means(c, d) + spread * normal(rng);
            ds.labels[idx] = c;
        }
    }
    return ds;
}

// Stratified split, deterministic under seed; fills the index masks in place.
inline void split(Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("split: val_fraction must be in (0, 1)");
    auto rng = substream(seed, "split");
    ds.train_indices.clear();
    ds.val_indices.clear();

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    for (auto& [cls, idxs] : by_class) {
        const std::size_t n_val =
            static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idxs.size())));
        if (n_val == 0 || n_val == idxs.size())
            throw std::invalid_argument("split: class " + std::to_string(cls) +
                                        " too small for both splits");
        // Fisher-Yates
        for (std::size_t i = idxs.size(); i-- > 1;)
            std::swap(idxs[i], idxs[uniform_index(rng, i + 1)]);
        for (std::size_t i = 0; i < idxs.size(); ++i)
            (i < n_val ? ds.val_indices : ds.train_indices).push_back(idxs[i]);
    }
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.val_indices.begin(), ds.val_indices.end());
}

// M-per-class batch sampler: B/M distinct classes uniformly, then M distinct
// train samples of each.
class MPerClassSampler {
public:
    MPerClassSampler(const Dataset& ds, std::size_t batch_size, std::size_t samples_per_class,
                     std::uint64_t seed)
        : batch_size_(batch_size), per_class_(samples_per_class),
          rng_(substream(seed, "sampler")) {
        if (per_class_ == 0 || batch_size_ % per_class_ != 0)
            throw std::invalid_argument("sampler: M must divide B");
        for (std::size_t i : ds.train_indices) class_to_train_[ds.labels[i]].push_back(i);
        const std::size_t classes_per_batch = batch_size_ / per_class_;
        if (classes_per_batch > class_to_train_.size())
            throw std::invalid_argument("sampler: B/M exceeds number of train classes");
        for (const auto& [cls, idxs] : class_to_train_) {
            if (idxs.size() < per_class_)
                throw std::invalid_argument("sampler: class " + std::to_string(cls) +
                                            " has fewer than M train samples");
            classes_.push_back(cls);
        }
    }

    std::vector<std::size_t> next_batch() {
        const std::size_t k = batch_size_ / per_class_;
        // partial Fisher-Yates over the class list
        std::vector<int> cls = classes_;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(cls[i], cls[i + uniform_index(rng_, cls.size() - i)]);
        std::vector<std::size_t> batch;
        batch.reserve(batch_size_);
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<std::size_t> pool = class_to_train_[cls[i]];
            for (std::size_t j = 0; j < per_class_; ++j) {
                std::swap(pool[j], pool[j + uniform_index(rng_, pool.size() - j)]);
                batch.push_back(pool[j]);
            }
        }
        return batch;
    }

private:
    std::size_t batch_size_;
    std::size_t per_class_;
    std::map<int, std::vector<std::size_t>> class_to_train_;
    std::vector<int> classes_;
    std::mt19937_64 rng_;
};

}  // namespace ccp
