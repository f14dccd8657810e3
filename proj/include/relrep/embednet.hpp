#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relrep/assign.hpp"
#include "relrep/common.hpp"
#include "relrep/neighbors.hpp"
#include "relrep/targets.hpp"

namespace relrep {

// MLP with ReLU hidden layers and a linear output layer. Batches are
// column-major: one sample per column.
struct EmbedNet {
    std::vector<Eigen::MatrixXd> W;  // layer l maps W[l].cols() -> W[l].rows()
    std::vector<Eigen::VectorXd> b;

    int num_layers() const { return static_cast<int>(W.size()); }
    int input_dim() const { return static_cast<int>(W.front().cols()); }
    int output_dim() const { return static_cast<int>(W.back().rows()); }
};

struct Gradients {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
};

// anchor, positive, negative as column ids of the sample matrix
using TripletIdx = std::array<int, 3>;

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs_per_reassign = 3;
    int batch_size = 64;
    int max_epochs = 150;
    double rel_improve_tol = 1e-4;
    int assign_proposals_factor = 2;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("sgd: learning_rate must be >= 0");
        if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("sgd: momentum must be in [0, 1)");
        if (epochs_per_reassign < 1) throw std::invalid_argument("sgd: epochs_per_reassign must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("sgd: batch_size must be >= 1");
        if (max_epochs < 0) throw std::invalid_argument("sgd: max_epochs must be >= 0");
        if (assign_proposals_factor < 1) throw std::invalid_argument("sgd: assign_proposals_factor must be >= 1");
    }
};

inline EmbedNet make_embednet(int d_in, const std::vector<int>& hidden_sizes, int D,
                              std::uint64_t seed) {
    if (d_in < 1 || D < 1) throw std::invalid_argument("make_embednet: dimensions must be >= 1");
    for (int h : hidden_sizes)
        if (h < 1) throw std::invalid_argument("make_embednet: hidden sizes must be >= 1");

    std::vector<int> dims;
    dims.push_back(d_in);
    for (int h : hidden_sizes) dims.push_back(h);
    dims.push_back(D);

    Rng rng(derive_seed(seed, 0x6e657477ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbedNet net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        int fan_in = dims[l];
        int fan_out = dims[l + 1];
        double scale = std::sqrt(2.0 / fan_in);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = scale * gauss(rng);
        net.W.push_back(std::move(w));
        net.b.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

inline Gradients zero_gradients(const EmbedNet& net) {
    Gradients g;
    for (int l = 0; l < net.num_layers(); ++l) {
        g.W.push_back(Eigen::MatrixXd::Zero(net.W[static_cast<std::size_t>(l)].rows(),
                                            net.W[static_cast<std::size_t>(l)].cols()));
        g.b.push_back(Eigen::VectorXd::Zero(net.b[static_cast<std::size_t>(l)].size()));
    }
    return g;
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l+1] = layer l output
};

inline Eigen::MatrixXd forward_cached(const EmbedNet& net, const Eigen::MatrixXd& x,
                                      ForwardCache& cache) {
    if (x.rows() != net.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
    cache.acts.clear();
    cache.acts.reserve(static_cast<std::size_t>(net.num_layers()) + 1);
    cache.acts.push_back(x);
    for (int l = 0; l < net.num_layers(); ++l) {
        Eigen::MatrixXd z = (net.W[static_cast<std::size_t>(l)] * cache.acts.back()).colwise() +
                            net.b[static_cast<std::size_t>(l)];
        if (l + 1 < net.num_layers()) z = z.cwiseMax(0.0);
        cache.acts.push_back(std::move(z));
    }
    return cache.acts.back();
}

inline Eigen::MatrixXd forward_batch(const EmbedNet& net, const Eigen::MatrixXd& x) {
    ForwardCache cache;
    return forward_cached(net, x, cache);
}

inline Eigen::VectorXd forward(const EmbedNet& net, const Eigen::VectorXd& x) {
    return forward_batch(net, x).col(0);
}

// accumulates dLoss/dtheta for the batch given dLoss/doutput
inline void backward(const EmbedNet& net, const ForwardCache& cache, Eigen::MatrixXd delta,
                     Gradients& grads) {
    for (int l = net.num_layers() - 1; l >= 0; --l) {
        const Eigen::MatrixXd& a_prev = cache.acts[static_cast<std::size_t>(l)];
        grads.W[static_cast<std::size_t>(l)].noalias() += delta * a_prev.transpose();
        grads.b[static_cast<std::size_t>(l)] += delta.rowwise().sum();
        if (l > 0) {
            delta = net.W[static_cast<std::size_t>(l)].transpose() * delta;
            const Eigen::MatrixXd& act = cache.acts[static_cast<std::size_t>(l)];
            delta = delta.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
        }
    }
}

// one row per slot, convenience view for neighbor queries
inline EmbeddedSet embed_dataset(const EmbedNet& net, const Eigen::MatrixXd& vectors) {
    if (vectors.cols() != net.input_dim()) throw std::invalid_argument("embed_dataset: dimension mismatch");
    return forward_batch(net, vectors.transpose()).transpose();
}

namespace detail {

inline Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& x, const std::vector<int>& ids) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t c = 0; c < ids.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(ids[c]);
    return out;
}

}  // namespace detail

// sum of squared distances between slot embeddings and their assigned targets
inline double local_loss(const EmbedNet& net, const Eigen::MatrixXd& slot_inputs,
                         const TargetSpace& space, const Assignment& a) {
    if (static_cast<int>(slot_inputs.cols()) != a.size() || space.num_targets() != a.size())
        throw std::invalid_argument("local_loss: misaligned sizes");
    Eigen::MatrixXd y = forward_batch(net, slot_inputs);
    double loss = 0.0;
    for (int t = 0; t < a.size(); ++t)
        loss += (y.col(t) - space.targets.row(a.perm[static_cast<std::size_t>(t)]).transpose()).squaredNorm();
    return loss;
}

inline double local_loss_grad(const EmbedNet& net, const Eigen::MatrixXd& slot_inputs,
                              const TargetSpace& space, const Assignment& a, Gradients& grads) {
    if (static_cast<int>(slot_inputs.cols()) != a.size() || space.num_targets() != a.size())
        throw std::invalid_argument("local_loss: misaligned sizes");
    ForwardCache cache;
    Eigen::MatrixXd y = forward_cached(net, slot_inputs, cache);
    Eigen::MatrixXd delta(y.rows(), y.cols());
    double loss = 0.0;
    for (int t = 0; t < a.size(); ++t) {
        Eigen::VectorXd r = y.col(t) - space.targets.row(a.perm[static_cast<std::size_t>(t)]).transpose();
        loss += r.squaredNorm();
        delta.col(t) = 2.0 * r;
    }
    backward(net, cache, std::move(delta), grads);
    return loss;
}

// hinge ranking loss with plain L2 distances
inline double triplet_loss(const EmbedNet& net, const Eigen::MatrixXd& samples,
                           const std::vector<TripletIdx>& triplets, double margin) {
    if (margin < 0.0) throw std::invalid_argument("triplet_loss: negative margin");
    if (triplets.empty()) return 0.0;
    Eigen::MatrixXd y = forward_batch(net, samples);
    double loss = 0.0;
    for (const auto& t : triplets) {
        double dap = (y.col(t[0]) - y.col(t[1])).norm();
        double dan = (y.col(t[0]) - y.col(t[2])).norm();
        double z = dap - dan + margin;
        if (z > 0.0) loss += z;
    }
    return loss;
}

inline double triplet_loss_grad(const EmbedNet& net, const Eigen::MatrixXd& samples,
                                const std::vector<TripletIdx>& triplets, double margin,
                                Gradients& grads, double weight = 1.0) {
    if (margin < 0.0) throw std::invalid_argument("triplet_loss: negative margin");
    if (triplets.empty()) return 0.0;
    ForwardCache cache;
    Eigen::MatrixXd y = forward_cached(net, samples, cache);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(y.rows(), y.cols());
    double loss = 0.0;
    for (const auto& t : triplets) {
        Eigen::VectorXd rap = y.col(t[0]) - y.col(t[1]);
        Eigen::VectorXd ran = y.col(t[0]) - y.col(t[2]);
        double dap = rap.norm();
        double dan = ran.norm();
        double z = dap - dan + margin;
        if (z <= 0.0) continue;
        loss += z;
        if (dap > 0.0) {
            Eigen::VectorXd g = rap / dap;
            delta.col(t[0]) += g;
            delta.col(t[1]) -= g;
        }
        if (dan > 0.0) {
            Eigen::VectorXd g = ran / dan;
            delta.col(t[0]) -= g;
            delta.col(t[2]) += g;
        }
    }
    if (weight != 1.0) delta *= weight;
    backward(net, cache, std::move(delta), grads);
    return loss;
}

struct TrainResult {
    EmbedNet net;
    Assignment assignment;
    std::vector<double> epoch_losses;  // full loss after each completed epoch
};

// Alternates assignment swap passes with minibatch SGD on
// local + transfer_weight * triplet loss. Triplet indices address columns of
// samples; slot s trains on samples.col(slot_sample_ids[s]).
inline TrainResult train_refine(const EmbedNet& net0, const Eigen::MatrixXd& samples,
                                const std::vector<int>& slot_sample_ids, const TargetSpace& space,
                                Assignment assignment, const std::vector<TripletIdx>& triplets,
                                double margin, double transfer_weight, const SgdConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    const int num_slots = static_cast<int>(slot_sample_ids.size());
    if (space.num_targets() != num_slots || assignment.size() != num_slots)
        throw std::invalid_argument("train: slots, targets and assignment must agree");
    if (space.D != net0.output_dim()) throw std::invalid_argument("train: target dimension mismatch");
    for (int id : slot_sample_ids)
        if (id < 0 || id >= samples.cols()) throw std::invalid_argument("train: slot sample id out of range");
    for (const auto& t : triplets)
        for (int id : t)
            if (id < 0 || id >= samples.cols()) throw std::invalid_argument("train: triplet sample id out of range");

    TrainResult res;
    res.net = net0;
    res.assignment = std::move(assignment);

    Eigen::MatrixXd slot_inputs = detail::gather_columns(samples, slot_sample_ids);
    Gradients velocity = zero_gradients(res.net);

    std::vector<int> slot_order(static_cast<std::size_t>(num_slots));
    std::iota(slot_order.begin(), slot_order.end(), 0);
    std::vector<int> triplet_order(triplets.size());
    std::iota(triplet_order.begin(), triplet_order.end(), 0);

    const int num_batches = (num_slots + cfg.batch_size - 1) / cfg.batch_size;
    double prev_loss = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        if (epoch % cfg.epochs_per_reassign == 0) {
            EmbeddedSet slot_embed = forward_batch(res.net, slot_inputs).transpose();
            res.assignment = local_update_pass(slot_embed, space, std::move(res.assignment),
                                               cfg.assign_proposals_factor * num_slots,
                                               derive_seed(seed, 0x61706173ULL, static_cast<std::uint64_t>(epoch)));
        }

        {
            Rng srng(derive_seed(seed, 0x736c6f74ULL, static_cast<std::uint64_t>(epoch)));
            shuffle_inplace(slot_order, srng);
        }
        if (!triplets.empty()) {
            Rng trng(derive_seed(seed, 0x74726970ULL, static_cast<std::uint64_t>(epoch)));
            shuffle_inplace(triplet_order, trng);
        }

        for (int batch = 0; batch < num_batches; ++batch) {
            int lo = batch * cfg.batch_size;
            int hi = std::min(num_slots, lo + cfg.batch_size);
            int bs = hi - lo;

            Eigen::MatrixXd xb(slot_inputs.rows(), bs);
            Eigen::MatrixXd tb(bs, space.D);
            for (int c = 0; c < bs; ++c) {
                int slot = slot_order[static_cast<std::size_t>(lo + c)];
                xb.col(c) = slot_inputs.col(slot);
                tb.row(c) = space.targets.row(res.assignment.perm[static_cast<std::size_t>(slot)]);
            }

            Gradients grads = zero_gradients(res.net);
            ForwardCache cache;
            Eigen::MatrixXd y = forward_cached(res.net, xb, cache);
            Eigen::MatrixXd delta = 2.0 * (y - tb.transpose());
            backward(res.net, cache, std::move(delta), grads);

            if (!triplets.empty()) {
                std::size_t tlo = triplets.size() * static_cast<std::size_t>(batch) /
                                  static_cast<std::size_t>(num_batches);
                std::size_t thi = triplets.size() * static_cast<std::size_t>(batch + 1) /
                                  static_cast<std::size_t>(num_batches);
                if (thi > tlo) {
                    std::vector<TripletIdx> chunk;
                    chunk.reserve(thi - tlo);
                    std::vector<int> cols;
                    for (std::size_t q = tlo; q < thi; ++q) {
                        TripletIdx remapped;
                        const TripletIdx& src = triplets[static_cast<std::size_t>(
                            triplet_order[static_cast<std::size_t>(q)])];
                        for (int e = 0; e < 3; ++e) {
                            int id = src[static_cast<std::size_t>(e)];
                            auto it = std::find(cols.begin(), cols.end(), id);
                            if (it == cols.end()) {
                                remapped[static_cast<std::size_t>(e)] = static_cast<int>(cols.size());
                                cols.push_back(id);
                            } else {
                                remapped[static_cast<std::size_t>(e)] = static_cast<int>(it - cols.begin());
                            }
                        }
                        chunk.push_back(remapped);
                    }
                    Eigen::MatrixXd xt = detail::gather_columns(samples, cols);
                    triplet_loss_grad(res.net, xt, chunk, margin, grads, transfer_weight);
                }
            }

            double inv = 1.0 / static_cast<double>(bs);
            for (int l = 0; l < res.net.num_layers(); ++l) {
                auto lu = static_cast<std::size_t>(l);
                velocity.W[lu] = cfg.momentum * velocity.W[lu] + inv * grads.W[lu];
                velocity.b[lu] = cfg.momentum * velocity.b[lu] + inv * grads.b[lu];
                res.net.W[lu] -= cfg.learning_rate * velocity.W[lu];
                res.net.b[lu] -= cfg.learning_rate * velocity.b[lu];
            }
        }

        double loss = local_loss(res.net, slot_inputs, space, res.assignment) +
                      transfer_weight * triplet_loss(res.net, samples, triplets, margin);
        if (!std::isfinite(loss)) throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                                           std::to_string(epoch));
        res.epoch_losses.push_back(loss);
        if (epoch > 0) {
            double improve = (prev_loss - loss) / std::max(std::abs(prev_loss), 1e-12);
            if (improve < cfg.rel_improve_tol) break;
        }
        prev_loss = loss;
    }

    EmbeddedSet slot_embed = forward_batch(res.net, slot_inputs).transpose();
    res.assignment.cost = assignment_cost(slot_embed, space, res.assignment);
    return res;
}

inline TrainResult train_local(const EmbedNet& net0, const Eigen::MatrixXd& samples,
                               const std::vector<int>& slot_sample_ids, const TargetSpace& space,
                               Assignment assignment, const SgdConfig& cfg, std::uint64_t seed) {
    return train_refine(net0, samples, slot_sample_ids, space, std::move(assignment), {}, 0.0, 0.0,
                        cfg, seed);
}

// text manifest line with layer shapes, then float32 tensors in layer order
inline void save_checkpoint(const EmbedNet& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::ostringstream manifest;
    manifest << "relrep-net " << net.num_layers();
    for (int l = 0; l < net.num_layers(); ++l)
        manifest << ' ' << net.W[static_cast<std::size_t>(l)].rows() << 'x'
                 << net.W[static_cast<std::size_t>(l)].cols();
    manifest << '\n';
    out << manifest.str();
    for (int l = 0; l < net.num_layers(); ++l) {
        const auto& w = net.W[static_cast<std::size_t>(l)];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                float v = static_cast<float>(w(r, c));
                out.write(reinterpret_cast<const char*>(&v), 4);
            }
        const auto& bias = net.b[static_cast<std::size_t>(l)];
        for (Eigen::Index r = 0; r < bias.size(); ++r) {
            float v = static_cast<float>(bias(r));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    }
}

inline EmbedNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty checkpoint " + path);
    std::istringstream ls(line);
    std::string magic;
    int layers = 0;
    ls >> magic >> layers;
    if (magic != "relrep-net" || layers < 1) throw std::runtime_error("bad checkpoint manifest in " + path);

    EmbedNet net;
    std::vector<std::pair<int, int>> shapes;
    for (int l = 0; l < layers; ++l) {
        std::string shape;
        if (!(ls >> shape)) throw std::runtime_error("bad checkpoint manifest in " + path);
        auto x = shape.find('x');
        if (x == std::string::npos) throw std::runtime_error("bad checkpoint manifest in " + path);
        int rows = std::stoi(shape.substr(0, x));
        int cols = std::stoi(shape.substr(x + 1));
        if (rows < 1 || cols < 1) throw std::runtime_error("bad checkpoint manifest in " + path);
        shapes.emplace_back(rows, cols);
    }
    for (auto [rows, cols] : shapes) {
        Eigen::MatrixXd w(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                float v;
                if (!in.read(reinterpret_cast<char*>(&v), 4))
                    throw std::runtime_error("truncated checkpoint " + path);
                w(r, c) = static_cast<double>(v);
            }
        Eigen::VectorXd bias(rows);
        for (int r = 0; r < rows; ++r) {
            float v;
            if (!in.read(reinterpret_cast<char*>(&v), 4))
                throw std::runtime_error("truncated checkpoint " + path);
            bias(r) = static_cast<double>(v);
        }
        net.W.push_back(std::move(w));
        net.b.push_back(std::move(bias));
    }
    return net;
}

}  // namespace relrep
