#include "streamattack/error.hpp"

namespace streamattack {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::EmptyData: return "empty-data";
    case ErrorKind::DataSize: return "data-size";
    case ErrorKind::Training: return "training";
    case ErrorKind::Attack: return "attack";
  }
  return "unknown";
}

}  // namespace streamattack
