#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <sstream>

#include "pcbdet/common.hpp"
#include "pcbdet/dataset.hpp"

namespace pcbdet {

ParsedAnnotation parse_annotation(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(xml_text);
    pt::read_xml(is, tree);
  } catch (const pt::ptree_error& e) {
    throw Error(std::string("parse_annotation: malformed document: ") +
                e.what());
  }

  ParsedAnnotation ann;
  try {
    const pt::ptree& root = tree.get_child("annotation");
    ann.width = root.get<int>("size.width");
    ann.height = root.get<int>("size.height");
    ann.filename = root.get<std::string>("filename", "");
    check(ann.width > 0 && ann.height > 0,
          "parse_annotation: non-positive image size");
    for (const auto& [key, obj] : root) {
      if (key != "object") continue;
      const std::string name = obj.get<std::string>("name");
      const double xmin = obj.get<double>("bndbox.xmin");
      const double ymin = obj.get<double>("bndbox.ymin");
      const double xmax = obj.get<double>("bndbox.xmax");
      const double ymax = obj.get<double>("bndbox.ymax");
      check(xmax > xmin && ymax > ymin,
            "parse_annotation: degenerate box for '" + name + "'");
      GroundTruthBox gt;
      gt.class_id = class_id_from_name(name);
      gt.box.cx = 0.5 * (xmin + xmax) / ann.width;
      gt.box.cy = 0.5 * (ymin + ymax) / ann.height;
      gt.box.w = (xmax - xmin) / ann.width;
      gt.box.h = (ymax - ymin) / ann.height;
      ann.boxes.push_back(gt);
    }
  } catch (const pt::ptree_error& e) {
    throw Error(std::string("parse_annotation: missing field: ") + e.what());
  }
  return ann;
}

std::string write_annotation(const DatasetRecord& record) {
  const int w = record.image.width, h = record.image.height;
  std::ostringstream os;
  os << "<annotation>\n";
  os << "  <folder>images</folder>\n";
  os << "  <filename>" << record.id << ".png</filename>\n";
  os << "  <size><width>" << w << "</width><height>" << h
     << "</height><depth>3</depth></size>\n";
  for (const GroundTruthBox& gt : record.boxes) {
    check(gt.class_id >= 0 &&
              gt.class_id < static_cast<int>(kPcbClassNames.size()),
          "write_annotation: class id out of range");
    const long xmin = std::lround(gt.box.x1() * w);
    const long ymin = std::lround(gt.box.y1() * h);
    const long xmax = std::lround(gt.box.x2() * w);
    const long ymax = std::lround(gt.box.y2() * h);
    os << "  <object>\n";
    os << "    <name>" << kPcbClassNames[gt.class_id] << "</name>\n";
    os << "    <bndbox><xmin>" << xmin << "</xmin><ymin>" << ymin
       << "</ymin><xmax>" << xmax << "</xmax><ymax>" << ymax
       << "</ymax></bndbox>\n";
    os << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

}  // namespace pcbdet
