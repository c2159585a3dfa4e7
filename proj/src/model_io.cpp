#include "cdvz/model_io.hpp"

#include <fstream>
#include <sstream>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

void write_section(std::ostream& out, const std::string& name, const std::string& body) {
  std::size_t lines = 0;
  for (char c : body)
    if (c == '\n') ++lines;
  char head[96];
  std::snprintf(head, sizeof(head), "section %s %zu %08x\n", name.c_str(), lines, crc32(body));
  out << head << body;
}

std::string row_to_line(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string line;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) line += ' ';
    line += format_double(row[i]);
  }
  return line;
}

Eigen::RowVectorXd line_to_row(const std::string& line, Eigen::Index expect) {
  std::istringstream in(line);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) vals.push_back(parse_double(tok));
  if (expect >= 0 && static_cast<Eigen::Index>(vals.size()) != expect)
    throw DataError("model bundle row has the wrong arity");
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) row[static_cast<Eigen::Index>(i)] = vals[i];
  return row;
}

struct SectionReader {
  std::istringstream in;
  std::string pending;

  explicit SectionReader(std::string text) : in(std::move(text)) {}

  // Returns false at end; otherwise fills name/body of the next section.
  bool next(std::string& name, std::string& body) {
    std::string head;
    if (!std::getline(in, head)) return false;
    if (head == "end") return false;
    std::istringstream hs(head);
    std::string kw;
    std::size_t lines = 0;
    std::string crc_hex;
    hs >> kw >> name >> lines >> crc_hex;
    if (kw != "section" || name.empty()) throw DataError("malformed model bundle section header");
    body.clear();
    std::string line;
    for (std::size_t i = 0; i < lines; ++i) {
      if (!std::getline(in, line)) throw DataError("model bundle section truncated");
      body += line;
      body += '\n';
    }
    char computed[16];
    std::snprintf(computed, sizeof(computed), "%08x", crc32(body));
    if (crc_hex != computed) throw DataError("model bundle section '" + name + "' checksum mismatch");
    return true;
  }
};

}  // namespace

void ModelBundle::validate() const {
  if (select_n < 1) throw DataError("selection budget must be positive");
  relevance.validate();
  transforms.validate();
  quantizer.validate();
  pca.validate();
  gmm.validate();
}

std::uint32_t ModelBundle::crc() const { return crc32(serialize_model(*this)); }

std::string serialize_model(const ModelBundle& bundle) {
  std::ostringstream out;
  out << "CDVZ-MODEL 1\n";

  {
    std::ostringstream body;
    body << "num_octaves = " << bundle.detector.num_octaves << "\n";
    body << "sigmas =";
    for (double s : bundle.detector.sigmas) body << " " << format_double(s);
    body << "\n";
    body << "response_threshold = " << format_double(bundle.detector.response_threshold) << "\n";
    body << "edge_r = " << format_double(bundle.detector.edge_r) << "\n";
    write_section(out, "detector", body.str());
  }
  {
    std::ostringstream body;
    body << "n = " << bundle.select_n << "\n";
    write_relevance(bundle.relevance, body);
    write_section(out, "selector", body.str());
  }
  {
    std::ostringstream body;
    for (int r = 0; r < 8; ++r) body << row_to_line(bundle.transforms.a.row(r)) << "\n";
    for (int r = 0; r < 8; ++r) body << row_to_line(bundle.transforms.b.row(r)) << "\n";
    body << "scale = " << format_double(bundle.transforms.scale) << "\n";
    write_section(out, "transforms", body.str());
  }
  {
    std::ostringstream body;
    body << row_to_line(bundle.quantizer.t0.transpose()) << "\n";
    body << row_to_line(bundle.quantizer.t1.transpose()) << "\n";
    for (int e = 0; e < 128; ++e) body << (e ? " " : "") << bundle.quantizer.priority[static_cast<std::size_t>(e)];
    body << "\n";
    for (int e = 0; e < 128; ++e) body << (e ? " " : "") << int(bundle.quantizer.degenerate[static_cast<std::size_t>(e)]);
    body << "\n";
    write_section(out, "quantizer", body.str());
  }
  {
    std::ostringstream body;
    body << row_to_line(bundle.pca.mean.transpose()) << "\n";
    for (int r = 0; r < 32; ++r) body << row_to_line(bundle.pca.basis.row(r)) << "\n";
    write_section(out, "pca", body.str());
  }
  {
    std::ostringstream body;
    body << "components = " << bundle.gmm.components() << "\n";
    body << row_to_line(bundle.gmm.weights.transpose()) << "\n";
    for (int i = 0; i < bundle.gmm.components(); ++i) body << row_to_line(bundle.gmm.means.row(i)) << "\n";
    for (int i = 0; i < bundle.gmm.components(); ++i) body << row_to_line(bundle.gmm.stds.row(i)) << "\n";
    write_section(out, "gmm", body.str());
  }
  out << "end\n";
  return out.str();
}

ModelBundle parse_model(const std::string& text) {
  std::istringstream header_probe(text);
  std::string header;
  std::getline(header_probe, header);
  if (header != "CDVZ-MODEL 1") throw DataError("unsupported model bundle version");

  ModelBundle bundle;
  bundle.detector = ScaleSpaceConfig::defaults();
  SectionReader reader(text.substr(header.size() + 1));
  std::string name, body;
  bool saw_detector = false, saw_selector = false, saw_transforms = false, saw_quantizer = false,
       saw_pca = false, saw_gmm = false;

  while (reader.next(name, body)) {
    std::istringstream in(body);
    if (name == "detector") {
      std::string line;
      while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::istringstream ks(line.substr(0, eq));
        std::string key;
        ks >> key;
        std::istringstream vs(line.substr(eq + 1));
        if (key == "num_octaves") vs >> bundle.detector.num_octaves;
        else if (key == "sigmas") {
          bundle.detector.sigmas.clear();
          std::string tok;
          while (vs >> tok) bundle.detector.sigmas.push_back(parse_double(tok));
        } else if (key == "response_threshold") {
          std::string tok;
          vs >> tok;
          bundle.detector.response_threshold = parse_double(tok);
        } else if (key == "edge_r") {
          std::string tok;
          vs >> tok;
          bundle.detector.edge_r = parse_double(tok);
        } else throw DataError("unknown detector key: " + key);
      }
      bundle.detector.finalize();
      saw_detector = true;
    } else if (name == "selector") {
      std::string line;
      std::getline(in, line);
      std::istringstream ns(line);
      std::string kw, eq;
      ns >> kw >> eq >> bundle.select_n;
      if (kw != "n" || eq != "=") throw DataError("malformed selector section");
      // The rest of the body is a complete relevance table document.
      bundle.relevance = read_relevance(in);
      saw_selector = true;
    } else if (name == "transforms") {
      std::string line;
      for (int r = 0; r < 8; ++r) {
        if (!std::getline(in, line)) throw DataError("transform section truncated");
        bundle.transforms.a.row(r) = line_to_row(line, 8);
      }
      for (int r = 0; r < 8; ++r) {
        if (!std::getline(in, line)) throw DataError("transform section truncated");
        bundle.transforms.b.row(r) = line_to_row(line, 8);
      }
      if (!std::getline(in, line)) throw DataError("transform section truncated");
      {
        std::istringstream ss(line);
        std::string kw, eq, tok;
        ss >> kw >> eq >> tok;
        if (kw != "scale" || eq != "=") throw DataError("malformed transform scale line");
        bundle.transforms.scale = parse_double(tok);
      }
      saw_transforms = true;
    } else if (name == "quantizer") {
      std::string line;
      std::getline(in, line);
      bundle.quantizer.t0 = line_to_row(line, 128).transpose();
      std::getline(in, line);
      bundle.quantizer.t1 = line_to_row(line, 128).transpose();
      std::getline(in, line);
      {
        std::istringstream ps(line);
        for (int e = 0; e < 128; ++e)
          if (!(ps >> bundle.quantizer.priority[static_cast<std::size_t>(e)]))
            throw DataError("quantizer priority truncated");
      }
      std::getline(in, line);
      {
        std::istringstream ds(line);
        for (int e = 0; e < 128; ++e) {
          int flag = 0;
          if (!(ds >> flag)) throw DataError("quantizer flags truncated");
          bundle.quantizer.degenerate[static_cast<std::size_t>(e)] = static_cast<std::uint8_t>(flag);
        }
      }
      saw_quantizer = true;
    } else if (name == "pca") {
      std::string line;
      std::getline(in, line);
      bundle.pca.mean = line_to_row(line, 128).transpose();
      for (int r = 0; r < 32; ++r) {
        if (!std::getline(in, line)) throw DataError("pca section truncated");
        bundle.pca.basis.row(r) = line_to_row(line, 128);
      }
      saw_pca = true;
    } else if (name == "gmm") {
      std::string line;
      std::getline(in, line);
      std::istringstream cs(line);
      std::string kw, eq;
      int nc = 0;
      cs >> kw >> eq >> nc;
      if (kw != "components" || eq != "=" || nc < 1) throw DataError("malformed gmm section");
      std::getline(in, line);
      bundle.gmm.weights = line_to_row(line, nc).transpose();
      bundle.gmm.means.resize(nc, 32);
      bundle.gmm.stds.resize(nc, 32);
      for (int i = 0; i < nc; ++i) {
        if (!std::getline(in, line)) throw DataError("gmm section truncated");
        bundle.gmm.means.row(i) = line_to_row(line, 32);
      }
      for (int i = 0; i < nc; ++i) {
        if (!std::getline(in, line)) throw DataError("gmm section truncated");
        bundle.gmm.stds.row(i) = line_to_row(line, 32);
      }
      saw_gmm = true;
    } else {
      throw DataError("unknown model bundle section: " + name);
    }
  }

  if (!(saw_detector && saw_selector && saw_transforms && saw_quantizer && saw_pca && saw_gmm))
    throw DataError("model bundle is missing sections");
  bundle.validate();
  return bundle;
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model bundle: " + path.string());
  out << serialize_model(bundle);
  if (!out) throw DataError("write failed: " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model bundle: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace cdvz
