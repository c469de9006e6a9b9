#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sinet/tensor.hpp"

namespace sinet {

// Per-object validity; an empty mask means every object is valid.
using Mask = std::vector<bool>;

// One video: T frame features, T object sets, and a class label or a token
// sequence. Features are stored as they appear on disk, one row per frame
// and one row per object.
template <typename T>
struct VideoSample {
  std::string id;
  Tensor<T> frames;                // [T x m]
  std::vector<Tensor<T>> objects;  // T entries of [N_t x m]; N_t may be 0
  std::vector<Mask> masks;         // T entries, empty or N_t long
  std::optional<std::size_t> label;
  std::vector<std::size_t> caption;  // token ids including BOS and EOS

  std::size_t timesteps() const { return frames.rank() == 2 ? frames.shape()[0] : 0; }
  std::size_t feature_dim() const { return frames.rank() == 2 ? frames.shape()[1] : 0; }

  bool object_valid(std::size_t t, std::size_t n) const {
    return masks.size() <= t || masks[t].empty() || masks[t][n];
  }
  std::size_t valid_objects(std::size_t t) const {
    std::size_t count = 0;
    for (std::size_t n = 0; n < objects[t].rows(); ++n) count += object_valid(t, n) ? 1 : 0;
    return count;
  }

  // Throws ShapeError / EmptyInputError on a malformed record.
  void validate() const {
    if (frames.rank() != 2) throw ShapeError("video '" + id + "': frames must be [T x m]");
    if (timesteps() == 0) throw EmptyInputError("video '" + id + "' has no frames");
    if (objects.size() != timesteps()) {
      throw ShapeError("video '" + id + "': " + std::to_string(objects.size()) + " object sets for " +
                       std::to_string(timesteps()) + " frames");
    }
    for (std::size_t t = 0; t < objects.size(); ++t) {
      const Tensor<T>& o = objects[t];
      if (o.rank() != 2 || o.shape()[1] != feature_dim()) {
        throw ShapeError("video '" + id + "' frame " + std::to_string(t) + ": objects " +
                         shape_string(o.shape()) + " do not match feature dim " +
                         std::to_string(feature_dim()));
      }
      if (t < masks.size() && !masks[t].empty() && masks[t].size() != o.shape()[0]) {
        throw ShapeError("video '" + id + "' frame " + std::to_string(t) + ": mask length mismatch");
      }
    }
  }

  template <typename U>
  VideoSample<U> cast() const {
    VideoSample<U> out;
    out.id = id;
    out.frames = frames.template cast<U>();
    for (const auto& o : objects) out.objects.push_back(o.template cast<U>());
    out.masks = masks;
    out.label = label;
    out.caption = caption;
    return out;
  }
};

}  // namespace sinet
