#include "steerbo/container.hpp"

#include <cstring>
#include <fstream>

#include "steerbo/errors.hpp"

namespace steerbo {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'B', 'C'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

const NamedArray* Container::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

void save_container(const std::string& path, const Container& c) {
    nlohmann::json manifest;
    manifest["kind"] = c.kind;
    manifest["meta"] = c.meta;
    manifest["arrays"] = nlohmann::json::array();
    for (const auto& a : c.arrays) {
        manifest["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
    }
    std::string mbytes = manifest.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u64(os, mbytes.size());
    os.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
    for (const auto& a : c.arrays) {
        if (a.data.size() != a.element_count())
            throw DataError("array '" + a.name + "' data does not match its shape");
        os.write(reinterpret_cast<const char*>(a.data.data()),
                 static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!os) throw DataError("write failed: " + path);
}

Container load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a STBC container: " + path);
    uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("unsupported container version " + std::to_string(version));
    uint64_t mlen = read_u64(is);
    if (!is) throw DataError("truncated container header: " + path);

    std::string mbytes(mlen, '\0');
    is.read(mbytes.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw DataError("truncated manifest: " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mbytes);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad container manifest: ") + e.what());
    }

    Container c;
    c.kind = manifest.value("kind", "");
    c.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest.at("arrays")) {
        NamedArray a;
        a.name = entry.at("name").get<std::string>();
        a.shape = entry.at("shape").get<std::vector<size_t>>();
        a.data.resize(a.element_count());
        is.read(reinterpret_cast<char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
        if (!is) throw DataError("truncated payload for array '" + a.name + "'");
        c.arrays.push_back(std::move(a));
    }
    return c;
}

} // namespace steerbo
