#pragma once

#include <string>
#include <vector>

#include "lw/archive.hpp"
#include "lw/image.hpp"
#include "lw/nn.hpp"

namespace lw {

struct AutoencoderConfig {
    int image_h = 64, image_w = 64;
    int downsample_factor = 8;  // structural: three stride-2 stages
    int latent_channels = 4;
    int base_width = 16;
    int extra_blocks = 0;  // extra k3 conv blocks around the latent (attacker variants)
    int epochs = 14;
    Real learning_rate = 1e-3;
    int batch_size = 8;
    Real holdout_fraction = 0.1;
    // Fold per-channel latent scaling (unit variance) and the channel
    // reordering (most round-trip-robust channel becomes channel 0) into the
    // weights after training. Exact weight-space transforms.
    bool calibrate_latents = true;
    bool canonicalize_channels = true;
    RngSeed seed{1};

    void validate() const;
    std::string fingerprint() const;
    int latent_h() const { return image_h / downsample_factor; }
    int latent_w() const { return image_w / downsample_factor; }
};

// Plain convolutional autoencoder: three stride-2 stages down to a 4-channel
// latent, mirrored transposed-conv decoder, sigmoid pixel head, MSE training.
class ConvAutoencoder {
public:
    explicit ConvAutoencoder(const AutoencoderConfig& cfg);

    // Autograd paths for training loops; x/z are {N,3,H,W} / {N,4,h,w}.
    ag::Var encode_var(const ag::Var& x) const;
    ag::Var decode_var(const ag::Var& z) const;

    // Pure inference; accepts {3,H,W} or {N,3,H,W} (and the latent analogues).
    Tensor encode(const Tensor& x) const;
    Tensor decode(const Tensor& z) const;
    Tensor reconstruct(const Tensor& x) const { return decode(encode(x)); }

    const AutoencoderConfig& config() const { return cfg_; }
    nn::ParamList params() const;
    void set_frozen(bool frozen);
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    std::uint64_t weights_fingerprint() const { return to_archive().weights_fingerprint(); }
    Archive to_archive() const;
    static ConvAutoencoder from_archive(const Archive& a);

    // Exact weight-space transforms applied after training (see config flags).
    void fold_latent_calibration(const std::vector<Tensor>& images);
    std::vector<Real> reorder_channels_by_robustness(const std::vector<Tensor>& images,
                                                     RngSeed seed);
    void apply_channel_permutation(const std::vector<int>& perm);

private:
    AutoencoderConfig cfg_;
    bool trained_ = false;

    nn::Conv2d e0_, e1_, e2_, ehead_;
    nn::GroupNorm eg0_, eg1_, eg2_;
    std::vector<nn::Conv2d> eextra_;
    std::vector<nn::GroupNorm> egextra_;

    nn::Conv2d d_in_;
    nn::GroupNorm dg_in_;
    std::vector<nn::Conv2d> dextra_;
    std::vector<nn::GroupNorm> dgextra_;
    nn::ConvTranspose2d u0_, u1_, u2_;
    nn::GroupNorm ug0_, ug1_, ug2_;
    nn::Conv2d dhead_;
};

struct TrainedAutoencoder {
    ConvAutoencoder model;
    Real heldout_psnr = 0.0;
    std::vector<Real> epoch_loss;
    std::vector<Real> channel_robustness;  // post-reorder, descending from channel 0
};

// Deterministic in cfg.seed. Requires at least one image of the configured
// size; images outside [0,1] or with the wrong shape are rejected.
TrainedAutoencoder train_autoencoder(const std::vector<Tensor>& images,
                                     const AutoencoderConfig& cfg);

}  // namespace lw
