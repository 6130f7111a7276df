#include "skinfit/anim_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "skinfit/error.hpp"

namespace skinfit {

namespace {

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::istringstream next(const char* what) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
        }
        throw FormatError(std::string("unexpected end of file while reading ") + what);
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("line " + std::to_string(line_no_) + ": " + msg);
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

Vec3 read_xyz(std::istringstream& ls, LineReader& reader) {
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) reader.fail("expected three coordinates");
    std::string extra;
    if (ls >> extra) reader.fail("trailing token '" + extra + "'");
    return v;
}

}  // namespace

void write_anim(std::ostream& out, const AnimSequence& seq) {
    out << std::setprecision(17);
    out << "ANIM " << seq.vertex_count() << ' ' << seq.frame_count() << ' ' << seq.faces().size() << '\n';
    for (const auto& v : seq.rest_pose()) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : seq.faces()) out << "f " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    for (std::size_t p = 0; p < seq.frame_count(); ++p) {
        out << "frame " << p << '\n';
        for (const auto& v : seq.frame(p)) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
}

AnimSequence read_anim(std::istream& in) {
    LineReader reader(in);
    auto header = reader.next("header");
    std::string tag;
    long long n = 0;
    long long frames = 0;
    long long num_faces = 0;
    if (!(header >> tag) || tag != "ANIM") reader.fail("missing ANIM header");
    if (!(header >> n >> frames >> num_faces) || n <= 0 || frames <= 0 || num_faces < 0) {
        reader.fail("bad ANIM header counts");
    }

    std::vector<Vec3> rest(static_cast<std::size_t>(n));
    for (auto& v : rest) {
        auto ls = reader.next("rest pose");
        if (!(ls >> tag) || tag != "v") reader.fail("expected 'v' line");
        v = read_xyz(ls, reader);
    }
    std::vector<Face> faces(static_cast<std::size_t>(num_faces));
    for (auto& f : faces) {
        auto ls = reader.next("faces");
        long long a = 0, b = 0, c = 0;
        if (!(ls >> tag) || tag != "f") reader.fail("expected 'f' line");
        if (!(ls >> a >> b >> c) || a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) {
            reader.fail("bad face indices");
        }
        f = {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
    }
    std::vector<Vec3> positions;
    positions.reserve(static_cast<std::size_t>(n * frames));
    for (long long p = 0; p < frames; ++p) {
        auto ls = reader.next("frame header");
        long long index = -1;
        if (!(ls >> tag >> index) || tag != "frame" || index != p) {
            reader.fail("expected 'frame " + std::to_string(p) + "'");
        }
        for (long long i = 0; i < n; ++i) {
            auto vs = reader.next("frame positions");
            positions.push_back(read_xyz(vs, reader));
        }
    }
    return AnimSequence(std::move(rest), std::move(positions), static_cast<std::size_t>(frames), std::move(faces));
}

AnimSequence load_anim(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return read_anim(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_anim(const std::filesystem::path& path, const AnimSequence& seq) {
    std::ostringstream out;
    write_anim(out, seq);
    write_file_atomic(path, out.str());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw Error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace skinfit
