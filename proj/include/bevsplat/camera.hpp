// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "bevsplat/common.hpp"

namespace bevsplat {

/// Pinhole camera: intrinsics K, world-to-camera extrinsic T, and the render
/// resolution. Camera convention: +z forward, +x right, +y down (image v).
struct CameraModel {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  int width = 0;
  int height = 0;
  double near = 0.1;
  double far = 1000.0;

  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  Eigen::Matrix3d rotation() const { return T.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return T.topRightCorner<3, 1>(); }

  Eigen::Vector3d camera_center() const {
    return -rotation().transpose() * translation();
  }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation() * p_world + translation();
  }

  /// World-space direction of the ray through image point (u, v), scaled so
  /// that the ray parameter equals camera-space z depth.
  Eigen::Vector3d ray_direction(double u, double v) const {
    const Eigen::Vector3d d_cam((u - cx()) / fx(), (v - cy()) / fy(), 1.0);
    return rotation().transpose() * d_cam;
  }

  void validate() const {
    if (width <= 0 || height <= 0) throw ContractError("camera: zero-area frustum");
    if (!(fx() > 0.0) || !(fy() > 0.0)) throw ContractError("camera: fx and fy must be positive");
    if (!(near < far)) throw ContractError("camera: near must be less than far");
    if (!(near > 0.0)) throw ContractError("camera: near must be positive");
    const Eigen::Matrix3d r = rotation();
    const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9) {
      throw ContractError("camera: extrinsic rotation is not orthonormal with det +1");
    }
  }
};

inline CameraModel load_camera_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open camera file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid camera JSON in " + path + ": " + e.what());
  }
  CameraModel cam;
  try {
    const auto& k = j.at("K");
    const auto& t = j.at("T");
    if (k.size() != 9 || t.size() != 16) {
      throw ContractError("camera JSON: K must have 9 entries and T 16 (row-major)");
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cam.K(r, c) = k[r * 3 + c].get<double>();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) cam.T(r, c) = t[r * 4 + c].get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.near = j.at("near").get<double>();
    cam.far = j.at("far").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid camera JSON in " + path + ": " + e.what());
  }
  cam.validate();
  return cam;
}

inline void save_camera_json(const std::string& path, const CameraModel& cam) {
  nlohmann::json j;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["K"].push_back(cam.K(r, c));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) j["T"].push_back(cam.T(r, c));
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["near"] = cam.near;
  j["far"] = cam.far;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write camera file: " + path);
  out << j.dump(2) << "\n";
}

/// Builds a world-to-camera extrinsic looking from `eye` toward `target`,
/// with the image x axis horizontal with respect to `world_up`.
inline CameraModel make_lookat_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                      int width, int height, double focal, double near, double far,
                                      const Eigen::Vector3d& world_up = Eigen::Vector3d(0, 0, 1)) {
  CameraModel cam;
  Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d right = fwd.cross(world_up);
  if (right.norm() < 1e-12) {
    // Looking straight along world_up: pick any horizontal right vector.
    right = Eigen::Vector3d(1, 0, 0);
  }
  right.normalize();
  const Eigen::Vector3d down = fwd.cross(right).normalized();
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = fwd;
  cam.T.setIdentity();
  cam.T.topLeftCorner<3, 3>() = r;
  cam.T.topRightCorner<3, 1>() = -r * eye;
  cam.K.setIdentity();
  cam.K(0, 0) = focal;
  cam.K(1, 1) = focal;
  cam.K(0, 2) = 0.5 * width;
  cam.K(1, 2) = 0.5 * height;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  cam.far = far;
  cam.validate();
  return cam;
}

}  // namespace bevsplat
