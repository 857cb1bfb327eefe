#ifndef ODI_PNG_IO_HPP
#define ODI_PNG_IO_HPP

#include <string>

#include "odi/image.hpp"

namespace odi {

// 8-bit RGB PNG. Doubles are quantized with round(v*255) on write and mapped
// back with byte/255.0 on read; everything upstream stays in doubles.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

} // namespace odi

#endif
