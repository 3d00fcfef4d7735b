#include "minos/histogram.hpp"

#include <bit>

namespace minos {

int size_class(uint64_t size) {
  if (size == 0) size = 1;
  int octave = std::bit_width(size) - 1;
  if (octave >= kSizeOctaves) return kSizeClasses - 1;
  uint64_t base = uint64_t{1} << octave;
  int sub = static_cast<int>(((size - base) * kOctaveSubdivisions) >> octave);
  return octave * kOctaveSubdivisions + sub;
}

uint64_t class_lower(int c) {
  int octave = c / kOctaveSubdivisions;
  int sub = c % kOctaveSubdivisions;
  uint64_t base = uint64_t{1} << octave;
  // Smallest s with ((s - base) * 4) >> octave == sub.
  uint64_t offset = ((uint64_t{static_cast<uint64_t>(sub)} << octave) + kOctaveSubdivisions - 1) /
                    kOctaveSubdivisions;
  return base + offset;
}

uint64_t class_upper(int c) {
  if (c == kSizeClasses - 1) return (uint64_t{1} << kSizeOctaves) - 1;
  int octave = c / kOctaveSubdivisions;
  int sub = c % kOctaveSubdivisions;
  uint64_t base = uint64_t{1} << octave;
  uint64_t offset = ((uint64_t{static_cast<uint64_t>(sub) + 1} << octave) + kOctaveSubdivisions - 1) /
                    kOctaveSubdivisions;
  return base + offset - 1;
}

}  // namespace minos
