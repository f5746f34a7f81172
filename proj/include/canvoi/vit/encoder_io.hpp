#pragma once

#include <filesystem>

#include "canvoi/vit/checkpoint.hpp"
#include "canvoi/vit/encoder.hpp"

namespace canvoi::vit {

template <class T>
ckpt::Checkpoint encoder_checkpoint(const EncoderModel<T>& model) {
  ckpt::Checkpoint ck;
  ck.config = {{"kind", "encoder"}, {"encoder", ckpt::to_json(model.config())}};
  ckpt::append_params(ck, model.params());
  return ck;
}

template <class T>
EncoderModel<T> encoder_from_checkpoint(const ckpt::Checkpoint& ck) {
  if (ck.config.value("kind", "") != "encoder")
    throw DataError("checkpoint is not an encoder checkpoint");
  EncoderModel<T> model(ckpt::encoder_config_from_json(ck.config.at("encoder")));
  ckpt::load_params(ck, model.params());
  return model;
}

template <class T>
void save_encoder(const std::filesystem::path& path, const EncoderModel<T>& model) {
  ckpt::save(path, encoder_checkpoint(model));
}

template <class T>
EncoderModel<T> load_encoder(const std::filesystem::path& path) {
  return encoder_from_checkpoint<T>(ckpt::load(path));
}

}  // namespace canvoi::vit
