#include "trqsim/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trq {

namespace fs = std::filesystem;

std::uint64_t Rng::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) { return next() % n; }

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    require(k <= n, "sample_indices: cannot draw " + std::to_string(k) + " of " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

namespace {

constexpr int kSide = 28;

// segments a b c d e f g, bit 0 = a
constexpr std::uint8_t kSegments[10] = {0x3f, 0x06, 0x5b, 0x4f, 0x66, 0x6d, 0x7d, 0x07, 0x7f, 0x6f};

void draw_digit(int digit, Rng& rng, float* img) {
    const int w = 10 + static_cast<int>(rng.below(5));
    const int h = 16 + static_cast<int>(rng.below(5));
    const int t = 2 + static_cast<int>(rng.below(2));
    const int x0 = (kSide - w) / 2 + static_cast<int>(rng.below(5)) - 2;
    const int y0 = (kSide - h) / 2 + static_cast<int>(rng.below(5)) - 2;
    const double shear = (rng.uniform() - 0.5) * 0.4;
    const float ink = static_cast<float>(0.7 + 0.3 * rng.uniform());
    const int mid = y0 + h / 2;

    auto rect = [&](int x, int y, int rw, int rh) {
        for (int yy = y; yy < y + rh; ++yy) {
            const int dx = static_cast<int>(std::lround(shear * (mid - yy)));
            for (int xx = x; xx < x + rw; ++xx) {
                const int px = xx + dx;
                if (yy >= 0 && yy < kSide && px >= 0 && px < kSide) {
                    img[yy * kSide + px] = ink;
                }
            }
        }
    };
    const std::uint8_t seg = kSegments[digit];
    const int half = h / 2;
    if (seg & 0x01) rect(x0, y0, w, t);
    if (seg & 0x02) rect(x0 + w - t, y0, t, half + 1);
    if (seg & 0x04) rect(x0 + w - t, y0 + half, t, h - half);
    if (seg & 0x08) rect(x0, y0 + h - t, w, t);
    if (seg & 0x10) rect(x0, y0 + half, t, h - half);
    if (seg & 0x20) rect(x0, y0, t, half + 1);
    if (seg & 0x40) rect(x0, y0 + half - t / 2, w, t);

    for (int i = 0; i < kSide * kSide; ++i) {
        if (img[i] > 0.0f) {
            img[i] = std::clamp(img[i] + static_cast<float>(0.08 * rng.normal()), 0.0f, 1.0f);
        } else if (rng.uniform() < 0.01) {
            img[i] = static_cast<float>(0.5 * rng.uniform());
        }
    }
}

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;

struct FLayer {
    LayerKind kind = LayerKind::Relu;
    int in_c = 0;
    int out_c = 0;
    int k = 1;
    std::vector<int> in_shape;
    std::vector<int> out_shape;
    Mat w;   // out x fan_in
    Mat gw;
};

struct Cache {
    std::vector<Vec> acts;                 // acts[i] = input of layer i
    std::vector<Mat> cols;                 // conv im2col per layer
    std::vector<std::vector<int>> where;   // maxpool argmax per layer
};

Mat im2col_f(const Vec& x, const std::vector<int>& shape, int k) {
    const int c_n = shape[0], h = shape[1], w = shape[2];
    const int oh = h - k + 1, ow = w - k + 1;
    Mat cols(c_n * k * k, oh * ow);
    for (int c = 0; c < c_n; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (c * k + ky) * k + kx;
                for (int y = 0; y < oh; ++y) {
                    for (int xx = 0; xx < ow; ++xx) {
                        cols(r, y * ow + xx) = x[(c * h + y + ky) * w + xx + kx];
                    }
                }
            }
        }
    }
    return cols;
}

Vec col2im_f(const Mat& cols, const std::vector<int>& shape, int k) {
    const int c_n = shape[0], h = shape[1], w = shape[2];
    const int oh = h - k + 1, ow = w - k + 1;
    Vec x = Vec::Zero(c_n * h * w);
    for (int c = 0; c < c_n; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (c * k + ky) * k + kx;
                for (int y = 0; y < oh; ++y) {
                    for (int xx = 0; xx < ow; ++xx) {
                        x[(c * h + y + ky) * w + xx + kx] += cols(r, y * ow + xx);
                    }
                }
            }
        }
    }
    return x;
}

class FloatNet {
public:
    explicit FloatNet(NetworkGraph g, Rng& rng) : graph_(std::move(g)) {
        validate(graph_);
        for (const auto& L : graph_.layers) {
            FLayer f;
            f.kind = L.kind;
            f.in_c = L.in_channels;
            f.out_c = L.out_channels;
            f.k = L.kernel;
            f.in_shape = L.input_shape;
            f.out_shape = L.output_shape;
            if (L.is_mvm()) {
                const int fan = L.fan_in();
                f.w.resize(L.out_channels, fan);
                const double sd = std::sqrt(2.0 / fan);
                for (Eigen::Index i = 0; i < f.w.size(); ++i) {
                    f.w.data()[i] = static_cast<float>(sd * rng.normal());
                }
                f.gw = Mat::Zero(f.w.rows(), f.w.cols());
            }
            layers_.push_back(std::move(f));
        }
    }

    Vec forward(const Vec& input, Cache* cache) const {
        Vec x = input;
        if (cache) {
            cache->acts.assign(layers_.size(), Vec());
            cache->cols.assign(layers_.size(), Mat());
            cache->where.assign(layers_.size(), {});
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const FLayer& f = layers_[i];
            if (cache) {
                cache->acts[i] = x;
            }
            switch (f.kind) {
                case LayerKind::Fc:
                    x = f.w * x;
                    break;
                case LayerKind::Conv2d: {
                    Mat cols = im2col_f(x, f.in_shape, f.k);
                    Mat y = f.w * cols;
                    // (out, P) row-major is the channel-major volume
                    Mat yt = y.transpose();
                    x = Eigen::Map<const Vec>(yt.data(), yt.size());
                    if (cache) {
                        cache->cols[i] = std::move(cols);
                    }
                    break;
                }
                case LayerKind::Relu:
                    x = x.cwiseMax(0.0f);
                    break;
                case LayerKind::MaxPool: {
                    const int c_n = f.in_shape[0], h = f.in_shape[1], w = f.in_shape[2];
                    const int oh = f.out_shape[1], ow = f.out_shape[2];
                    const int k = f.k;
                    Vec y(c_n * oh * ow);
                    std::vector<int> where(static_cast<std::size_t>(y.size()));
                    for (int c = 0; c < c_n; ++c) {
                        for (int yy = 0; yy < oh; ++yy) {
                            for (int xx = 0; xx < ow; ++xx) {
                                int best = (c * h + yy * k) * w + xx * k;
                                for (int ky = 0; ky < k; ++ky) {
                                    for (int kx = 0; kx < k; ++kx) {
                                        const int at = (c * h + yy * k + ky) * w + xx * k + kx;
                                        if (x[at] > x[best]) {
                                            best = at;
                                        }
                                    }
                                }
                                const int o = (c * oh + yy) * ow + xx;
                                y[o] = x[best];
                                where[static_cast<std::size_t>(o)] = best;
                            }
                        }
                    }
                    if (cache) {
                        cache->where[i] = std::move(where);
                    }
                    x = y;
                    break;
                }
                case LayerKind::AvgPool:
                    throw ValidationError("float trainer: avgpool not supported");
                case LayerKind::Flatten:
                    break;
            }
        }
        return x;
    }

    // Accumulates weight gradients for one sample; returns the loss.
    double backward(const Vec& input, int label) {
        Cache cache;
        const Vec logits = forward(input, &cache);
        Vec p = (logits.array() - logits.maxCoeff()).exp();
        p /= p.sum();
        const double loss = -std::log(std::max(1e-12f, p[label]));
        Vec g = p;
        g[label] -= 1.0f;
        for (std::size_t ii = layers_.size(); ii-- > 0;) {
            FLayer& f = layers_[ii];
            const Vec& x = cache.acts[ii];
            switch (f.kind) {
                case LayerKind::Fc:
                    f.gw.noalias() += g * x.transpose();
                    g = f.w.transpose() * g;
                    break;
                case LayerKind::Conv2d: {
                    const int pcount = f.out_shape[1] * f.out_shape[2];
                    const Mat gy = Eigen::Map<const Mat>(g.data(), pcount, f.out_c).transpose();
                    f.gw.noalias() += gy * cache.cols[ii].transpose();
                    g = col2im_f(f.w.transpose() * gy, f.in_shape, f.k);
                    break;
                }
                case LayerKind::Relu:
                    g = (x.array() > 0.0f).select(g, 0.0f);
                    break;
                case LayerKind::MaxPool: {
                    Vec gx = Vec::Zero(x.size());
                    const auto& where = cache.where[ii];
                    for (std::size_t o = 0; o < where.size(); ++o) {
                        gx[where[o]] += g[static_cast<Eigen::Index>(o)];
                    }
                    g = gx;
                    break;
                }
                default:
                    break;
            }
        }
        return loss;
    }

    void step(float lr) {
        for (auto& f : layers_) {
            if (f.w.size() > 0) {
                f.w -= lr * f.gw;
                f.gw.setZero();
            }
        }
    }

    // Symmetric weight grid per layer; activation grids from the observed peak.
    NetworkGraph quantize(const Dataset& data, std::size_t calib) {
        std::vector<float> peak(layers_.size(), 0.0f);
        for (std::size_t s = 0; s < std::min(calib, data.size()); ++s) {
            const auto xs = data.sample(s);
            Cache cache;
            forward(Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size())).cast<float>(),
                    &cache);
            for (std::size_t i = 0; i < layers_.size(); ++i) {
                peak[i] = std::max(peak[i], cache.acts[i].maxCoeff());
            }
        }
        NetworkGraph g = graph_;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& L = g.layers[i];
            if (!L.is_mvm()) {
                continue;
            }
            const FLayer& f = layers_[i];
            const float wmax = std::max(f.w.cwiseAbs().maxCoeff(), 1e-8f);
            L.weight_scale = wmax / 127.0;
            std::vector<std::int8_t> q(static_cast<std::size_t>(f.w.size()));
            for (int o = 0; o < f.w.rows(); ++o) {
                for (int r = 0; r < f.w.cols(); ++r) {
                    const double v = std::round(f.w(o, r) / L.weight_scale);
                    q[static_cast<std::size_t>(o) * f.w.cols() + r] = static_cast<std::int8_t>(std::clamp(v, -127.0, 127.0));
                }
            }
            std::vector<std::uint32_t> shape;
            if (L.kind == LayerKind::Fc) {
                shape = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels)};
            } else {
                shape = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels),
                         static_cast<std::uint32_t>(L.kernel), static_cast<std::uint32_t>(L.kernel)};
            }
            L.weights = std::make_shared<const Tensor>(make_tensor(std::move(shape), std::move(q)));
            L.weight_file = L.name + ".trqt";
            L.input_scale = std::max(peak[i], 1e-6f) / 255.0;
        }
        validate(g);
        return g;
    }

private:
    NetworkGraph graph_;
    std::vector<FLayer> layers_;
};

LayerSpec mvm(LayerKind kind, const std::string& name, int in, int out, int k = 1) {
    LayerSpec L;
    L.kind = kind;
    L.name = name;
    L.in_channels = in;
    L.out_channels = out;
    L.kernel = k;
    // placeholder so the float trainer can propagate shapes
    std::vector<std::uint32_t> shape = kind == LayerKind::Fc
                                           ? std::vector<std::uint32_t>{static_cast<std::uint32_t>(out),
                                                                        static_cast<std::uint32_t>(in)}
                                           : std::vector<std::uint32_t>{static_cast<std::uint32_t>(out),
                                                                        static_cast<std::uint32_t>(in),
                                                                        static_cast<std::uint32_t>(k),
                                                                        static_cast<std::uint32_t>(k)};
    const std::size_t n = element_count(shape);
    L.weights = std::make_shared<const Tensor>(make_tensor(std::move(shape), std::vector<std::int8_t>(n, 0)));
    return L;
}

LayerSpec simple(LayerKind kind, const std::string& name, int k = 1) {
    LayerSpec L;
    L.kind = kind;
    L.name = name;
    L.kernel = k;
    L.stride = k;
    return L;
}

NetworkGraph train(NetworkGraph g, const Dataset& data, const TrainOptions& opt) {
    validate(data);
    require(data.size() > 0, "train: empty dataset");
    Rng rng(opt.seed);
    FloatNet net(std::move(g), rng);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    for (int e = 0; e < opt.epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
        }
        const float lr = static_cast<float>(opt.lr / (1.0 + e));
        int in_batch = 0;
        for (std::size_t s : order) {
            const auto xs = data.sample(s);
            net.backward(Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size())).cast<float>(),
                         data.labels[s]);
            if (++in_batch == opt.batch) {
                net.step(lr / static_cast<float>(opt.batch));
                in_batch = 0;
            }
        }
        if (in_batch > 0) {
            net.step(lr / static_cast<float>(opt.batch));
        }
    }
    return net.quantize(data, 512);
}

}  // namespace

Dataset make_digits(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> pixels(count * kSide * kSide, 0.0f);
    std::vector<std::int32_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int d = static_cast<int>(rng.below(10));
        labels[i] = d;
        draw_digit(d, rng, pixels.data() + i * kSide * kSide);
    }
    Dataset ds;
    ds.inputs = make_tensor({static_cast<std::uint32_t>(count), 1, kSide, kSide}, std::move(pixels));
    ds.labels.assign(labels.begin(), labels.end());
    return ds;
}

NetworkGraph train_mlp(const Dataset& train_set, int hidden, const TrainOptions& opt) {
    NetworkGraph g;
    g.name = "mlp";
    g.input_shape = {1, kSide, kSide};
    g.layers = {simple(LayerKind::Flatten, "flatten"), mvm(LayerKind::Fc, "fc1", kSide * kSide, hidden),
                simple(LayerKind::Relu, "relu1"), mvm(LayerKind::Fc, "fc2", hidden, 10)};
    return train(std::move(g), train_set, opt);
}

NetworkGraph train_lenet(const Dataset& train_set, const TrainOptions& opt) {
    NetworkGraph g;
    g.name = "lenet";
    g.input_shape = {1, kSide, kSide};
    g.layers = {mvm(LayerKind::Conv2d, "conv1", 1, 6, 5), simple(LayerKind::Relu, "relu1"),
                simple(LayerKind::MaxPool, "pool1", 2),    mvm(LayerKind::Conv2d, "conv2", 6, 16, 5),
                simple(LayerKind::Relu, "relu2"),          simple(LayerKind::MaxPool, "pool2", 2),
                simple(LayerKind::Flatten, "flatten"),     mvm(LayerKind::Fc, "fc1", 256, 120),
                simple(LayerKind::Relu, "relu3"),          mvm(LayerKind::Fc, "fc2", 120, 84),
                simple(LayerKind::Relu, "relu4"),          mvm(LayerKind::Fc, "fc3", 84, 10)};
    return train(std::move(g), train_set, opt);
}

Fixture load_or_make_fixture(FixtureKind kind, const fs::path& dir) {
    const fs::path model = dir / "model.json";
    const fs::path train_file = dir / "train.json";
    const fs::path eval_file = dir / "eval.json";
    if (fs::exists(model) && fs::exists(train_file) && fs::exists(eval_file)) {
        return {load_model(model), load_dataset(train_file), load_dataset(eval_file)};
    }
    Fixture f;
    f.train = make_digits(kind == FixtureKind::Mlp ? 3000 : 2000, 11);
    f.eval = make_digits(500, 12);
    f.model = kind == FixtureKind::Mlp ? train_mlp(f.train) : train_lenet(f.train);
    fs::create_directories(dir);
    save_dataset(f.train, train_file);
    save_dataset(f.eval, eval_file);
    save_model(f.model, model);
    return f;
}

}  // namespace trq
