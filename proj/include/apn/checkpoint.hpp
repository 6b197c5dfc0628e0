#ifndef APN_CHECKPOINT_HPP
#define APN_CHECKPOINT_HPP

#include <string>

#include "apn/model.hpp"

namespace apn {

// Checkpoint file: magic "APNCKPT1", u32 format version, the named tensor
// record stream, then a u32-length-prefixed UTF-8 text block holding the
// config the model was trained with (key = value lines).
template <typename T>
void save_checkpoint(const std::string& path, const model::ModelParams<T>& params,
                     const std::string& config_text);

template <typename T>
model::ModelParams<T> load_checkpoint(const std::string& path, std::string* config_text);

// Reads only the trailing config text.
std::string checkpoint_config(const std::string& path);

uint64_t file_digest(const std::string& path);

}  // namespace apn

#endif
