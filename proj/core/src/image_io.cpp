#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pcbdet/common.hpp"
#include "pcbdet/dataset.hpp"

namespace pcbdet {

namespace {

cv::Mat to_mat_bgr(const ImageBuffer& image) {
  cv::Mat mat(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        px[2 - c] = static_cast<uchar>(std::lround(v * 255.0));
      }
    }
  return mat;
}

}  // namespace

ImageBuffer load_image_file(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
  check(!mat.empty(), "unreadable image '" + path + "'");
  ImageBuffer image;
  image.height = mat.rows;
  image.width = mat.cols;
  image.rgb.resize(static_cast<size_t>(mat.rows) * mat.cols * 3);
  for (int y = 0; y < mat.rows; ++y)
    for (int x = 0; x < mat.cols; ++x) {
      const auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c)
        image.at(y, x, c) = static_cast<double>(px[2 - c]) / 255.0;
    }
  return image;
}

void save_image_file(const ImageBuffer& image, const std::string& path) {
  check(image.height > 0 && image.width > 0, "save_image_file: empty image");
  check(cv::imwrite(path, to_mat_bgr(image)),
        "save_image_file: cannot write '" + path + "'");
}

void draw_detections(ImageBuffer& image, const std::vector<Detection>& dets,
                     const std::vector<std::string>& class_names) {
  cv::Mat mat = to_mat_bgr(image);
  for (const Detection& det : dets) {
    const int x1 = static_cast<int>(det.box.x1() * image.width);
    const int y1 = static_cast<int>(det.box.y1() * image.height);
    const int x2 = static_cast<int>(det.box.x2() * image.width);
    const int y2 = static_cast<int>(det.box.y2() * image.height);
    cv::rectangle(mat, {x1, y1}, {x2, y2}, {0, 0, 255}, 1);
    std::string label = det.class_id >= 0 &&
                                det.class_id < static_cast<int>(class_names.size())
                            ? class_names[det.class_id]
                            : std::to_string(det.class_id);
    label += " " + std::to_string(det.score).substr(0, 4);
    cv::putText(mat, label, {x1, std::max(y1 - 2, 8)},
                cv::FONT_HERSHEY_PLAIN, 0.8, {0, 0, 255});
  }
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c)
        image.at(y, x, c) = static_cast<double>(px[2 - c]) / 255.0;
    }
}

}  // namespace pcbdet
