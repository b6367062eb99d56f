// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowmotion/io.hpp"
#include "flowmotion/rng.hpp"
#include "flowmotion/tensor.hpp"
#include "flowmotion/velocity_field.hpp"

namespace flowmotion {

/// Two-hidden-layer tanh MLP velocity net with hand-written gradients.
/// Input is the flattened latent ++ t ++ one-hot condition (zeros = empty);
/// output is the flattened velocity. It exists to witness the training
/// objective — the guidance pipeline itself never needs it.
class MlpField final : public VelocityField {
public:
    MlpField(Shape4 latent_shape, std::vector<int> labels, int hidden,
             std::uint64_t init_seed)
        : latent_shape_(latent_shape),
          labels_(std::move(labels)),
          hidden_(hidden),
          init_seed_(init_seed),
          input_dim_(static_cast<int>(latent_shape.numel()) + 1 +
                     static_cast<int>(labels_.size())),
          output_dim_(static_cast<int>(latent_shape.numel())) {
        SeededRng rng(init_seed, 777);
        init_layer(w1_, b1_, hidden_, input_dim_, rng);
        init_layer(w2_, b2_, hidden_, hidden_, rng);
        init_layer(w3_, b3_, output_dim_, hidden_, rng);
    }

    Shape4 latent_shape() const { return latent_shape_; }
    int hidden() const { return hidden_; }
    const std::vector<int>& labels() const { return labels_; }
    std::uint64_t init_seed() const { return init_seed_; }

    std::size_t parameter_count() const {
        return w1_.size() + b1_.size() + w2_.size() + b2_.size() + w3_.size() +
               b3_.size();
    }

    /// One stochastic flow-matching step: draw (x, z1, t), build z_t on the
    /// interpolation path, regress the velocity target z1 - x under a
    /// sum-of-squares loss, take one SGD step. Returns the pre-step loss.
    double train_step(const Dataset& dataset, SeededRng& rng, double lr_train,
                      double t_min = 1e-3) {
        const std::size_t pick = static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(dataset.items.size()));
        const DatasetItem& item = dataset.items[std::min(pick, dataset.items.size() - 1)];
        LatentTensor z1 = sample_gaussian(latent_shape_, rng);
        const double t = t_min + (1.0 - t_min) * rng.uniform();
        LatentTensor z_t = lerp_path(item.latent, z1, t);

        std::vector<double> x = make_input(z_t, t, item.label);
        Activations act;
        forward(x, act);

        double loss = 0.0;
        std::vector<double> dy(output_dim_);
        for (int i = 0; i < output_dim_; ++i) {
            const double err = act.y[i] - (static_cast<double>(z1[i]) - item.latent[i]);
            loss += err * err;
            dy[i] = 2.0 * err;
        }
        if (lr_train != 0.0) backward_sgd(x, act, dy, lr_train);
        return loss;
    }

protected:
    LatentTensor do_eval(const LatentTensor& z_t, double t,
                         const Condition& cond) const override {
        require_same_shape(z_t, LatentTensor(latent_shape_), "mlp eval");
        int label = -1;
        if (cond.has_value()) label = *cond;
        std::vector<double> x = make_input(z_t, t, label);
        Activations act;
        forward(x, act);
        LatentTensor out(latent_shape_);
        for (int i = 0; i < output_dim_; ++i) out[i] = static_cast<float>(act.y[i]);
        return out;
    }

private:
    struct Activations {
        std::vector<double> h1, h2, y;
    };

    static void init_layer(std::vector<float>& w, std::vector<float>& b, int rows,
                           int cols, SeededRng& rng) {
        w.resize(static_cast<std::size_t>(rows) * cols);
        b.assign(rows, 0.0f);
        const double bound = std::sqrt(6.0 / (rows + cols));
        for (auto& v : w) {
            v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
        }
    }

    std::vector<double> make_input(const LatentTensor& z_t, double t, int label) const {
        std::vector<double> x(input_dim_, 0.0);
        for (int i = 0; i < output_dim_; ++i) x[i] = z_t[i];
        x[output_dim_] = t;
        for (std::size_t c = 0; c < labels_.size(); ++c) {
            if (labels_[c] == label) x[output_dim_ + 1 + c] = 1.0;
        }
        return x;
    }

    void forward(const std::vector<double>& x, Activations& act) const {
        act.h1 = affine_tanh(w1_, b1_, x, hidden_, input_dim_);
        act.h2 = affine_tanh(w2_, b2_, act.h1, hidden_, hidden_);
        act.y = affine(w3_, b3_, act.h2, output_dim_, hidden_);
    }

    static std::vector<double> affine(const std::vector<float>& w,
                                      const std::vector<float>& b,
                                      const std::vector<double>& x, int rows, int cols) {
        std::vector<double> out(rows);
        for (int r = 0; r < rows; ++r) {
            double acc = b[r];
            const float* wr = &w[static_cast<std::size_t>(r) * cols];
            for (int c = 0; c < cols; ++c) acc += static_cast<double>(wr[c]) * x[c];
            out[r] = acc;
        }
        return out;
    }

    static std::vector<double> affine_tanh(const std::vector<float>& w,
                                           const std::vector<float>& b,
                                           const std::vector<double>& x, int rows,
                                           int cols) {
        std::vector<double> out = affine(w, b, x, rows, cols);
        for (double& v : out) v = std::tanh(v);
        return out;
    }

    void backward_sgd(const std::vector<double>& x, const Activations& act,
                      const std::vector<double>& dy, double lr) {
        std::vector<double> dh2(hidden_, 0.0);
        step_layer(w3_, b3_, act.h2, dy, &dh2, output_dim_, hidden_, lr);
        for (int i = 0; i < hidden_; ++i) dh2[i] *= 1.0 - act.h2[i] * act.h2[i];
        std::vector<double> dh1(hidden_, 0.0);
        step_layer(w2_, b2_, act.h1, dh2, &dh1, hidden_, hidden_, lr);
        for (int i = 0; i < hidden_; ++i) dh1[i] *= 1.0 - act.h1[i] * act.h1[i];
        step_layer(w1_, b1_, x, dh1, nullptr, hidden_, input_dim_, lr);
    }

    /// Applies the SGD update for one layer and (optionally) emits the
    /// gradient with respect to its input, using the PRE-update weights.
    static void step_layer(std::vector<float>& w, std::vector<float>& b,
                           const std::vector<double>& in,
                           const std::vector<double>& dout,
                           std::vector<double>* din, int rows, int cols, double lr) {
        if (din) {
            din->assign(cols, 0.0);
            for (int r = 0; r < rows; ++r) {
                const float* wr = &w[static_cast<std::size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) (*din)[c] += wr[c] * dout[r];
            }
        }
        for (int r = 0; r < rows; ++r) {
            float* wr = &w[static_cast<std::size_t>(r) * cols];
            for (int c = 0; c < cols; ++c) {
                wr[c] = static_cast<float>(wr[c] - lr * dout[r] * in[c]);
            }
            b[r] = static_cast<float>(b[r] - lr * dout[r]);
        }
    }

    Shape4 latent_shape_;
    std::vector<int> labels_;
    int hidden_;
    std::uint64_t init_seed_;
    int input_dim_;
    int output_dim_;
    std::vector<float> w1_, b1_, w2_, b2_, w3_, b3_;

    friend void save_mlp(const MlpField&, const std::filesystem::path&);
    friend MlpField load_mlp(const std::filesystem::path&);
};

/// One flow-matching training step (free-function form).
inline double fm_train_step(MlpField& field, const Dataset& dataset, SeededRng& rng,
                            double lr_train) {
    return field.train_step(dataset, rng, lr_train);
}

inline void save_mlp(const MlpField& field, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json header;
    header["input_dim"] = field.input_dim_;
    header["hidden"] = field.hidden_;
    header["output_dim"] = field.output_dim_;
    header["latent_shape"] = {field.latent_shape_.f, field.latent_shape_.h,
                              field.latent_shape_.w, field.latent_shape_.c};
    header["labels"] = field.labels_;
    header["nonlinearity"] = "tanh";
    header["seed"] = field.init_seed_;
    write_file(dir / "header.json", header.dump(2) + "\n");

    auto save_mat = [&](const char* name, const std::vector<float>& v, int rows,
                        int cols) {
        write_file(dir / name,
                   fmlt_encode({static_cast<std::uint32_t>(rows),
                                static_cast<std::uint32_t>(cols)},
                               v));
    };
    auto save_vec = [&](const char* name, const std::vector<float>& v) {
        write_file(dir / name,
                   fmlt_encode({static_cast<std::uint32_t>(v.size())}, v));
    };
    save_mat("w1.fmlt", field.w1_, field.hidden_, field.input_dim_);
    save_vec("b1.fmlt", field.b1_);
    save_mat("w2.fmlt", field.w2_, field.hidden_, field.hidden_);
    save_vec("b2.fmlt", field.b2_);
    save_mat("w3.fmlt", field.w3_, field.output_dim_, field.hidden_);
    save_vec("b3.fmlt", field.b3_);
}

inline MlpField load_mlp(const std::filesystem::path& dir) {
    auto raw = read_file(dir / "header.json");
    nlohmann::json header = nlohmann::json::parse(raw.begin(), raw.end());
    auto ls = header.at("latent_shape");
    Shape4 shape{ls.at(0).get<int>(), ls.at(1).get<int>(), ls.at(2).get<int>(),
                 ls.at(3).get<int>()};
    MlpField field(shape, header.at("labels").get<std::vector<int>>(),
                   header.at("hidden").get<int>(),
                   header.at("seed").get<std::uint64_t>());
    auto load = [&](const char* name) {
        return fmlt_decode(read_file(dir / name)).values;
    };
    field.w1_ = load("w1.fmlt");
    field.b1_ = load("b1.fmlt");
    field.w2_ = load("w2.fmlt");
    field.b2_ = load("b2.fmlt");
    field.w3_ = load("w3.fmlt");
    field.b3_ = load("b3.fmlt");
    return field;
}

}  // namespace flowmotion
