#include "docsegtr/ppm.hpp"

#include <fstream>

namespace docsegtr {

void write_ppm(const std::string& path, const Image8& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()),
             static_cast<std::streamsize>(img.rgb.size()));
    if (!os) throw FormatError("short write: " + path);
}

static std::string next_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

Image8 read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    if (next_token(is) != "P6") throw FormatError("not a binary P6 PPM: " + path);
    Image8 img;
    try {
        img.w = std::stoll(next_token(is));
        img.h = std::stoll(next_token(is));
        const long maxval = std::stol(next_token(is));
        if (maxval != 255) throw FormatError("unsupported maxval in " + path);
    } catch (const std::logic_error&) {
        throw FormatError("malformed PPM header: " + path);
    }
    if (img.w < 1 || img.h < 1) throw FormatError("bad PPM dimensions: " + path);
    img.rgb.resize(static_cast<std::size_t>(img.h * img.w * 3));
    is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (is.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw FormatError("truncated PPM pixel data: " + path);
    }
    return img;
}

}  // namespace docsegtr
