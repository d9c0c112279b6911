#include "flow3d/model_zoo.hpp"

#include <stdexcept>

namespace flow3d::zoo {

namespace {

constexpr Triple k333{3, 3, 3};
constexpr Triple k133{1, 3, 3};
constexpr Triple k311{3, 1, 1};
constexpr Triple k111{1, 1, 1};

Padding spatial_pad(std::int64_t p) { return Padding{0, 0, p, p, p, p}; }
Padding temporal_pad(std::int64_t p) { return Padding{p, p, 0, 0, 0, 0}; }

struct Stage {
  std::int64_t planes;
  std::int64_t stride;
};

}  // namespace

ModelGraph c3d(std::int64_t classes) {
  ModelBuilder b("c3d", TensorShape{112, 112, 16, 3});
  const Padding same = same_padding(k333);
  std::string x = b.conv("conv1a", "", 64, k333, {1, 1, 1}, same);
  x = b.activation("relu1a", x);
  x = b.pool("pool1", x, OpType::Max, {1, 2, 2}, {1, 2, 2});
  x = b.conv("conv2a", x, 128, k333, {1, 1, 1}, same);
  x = b.activation("relu2a", x);
  x = b.pool("pool2", x, OpType::Max, {2, 2, 2}, {2, 2, 2});
  x = b.conv("conv3a", x, 256, k333, {1, 1, 1}, same);
  x = b.activation("relu3a", x);
  x = b.conv("conv3b", x, 256, k333, {1, 1, 1}, same);
  x = b.activation("relu3b", x);
  x = b.pool("pool3", x, OpType::Max, {2, 2, 2}, {2, 2, 2});
  x = b.conv("conv4a", x, 512, k333, {1, 1, 1}, same);
  x = b.activation("relu4a", x);
  x = b.conv("conv4b", x, 512, k333, {1, 1, 1}, same);
  x = b.activation("relu4b", x);
  x = b.pool("pool4", x, OpType::Max, {2, 2, 2}, {2, 2, 2});
  x = b.conv("conv5a", x, 512, k333, {1, 1, 1}, same);
  x = b.activation("relu5a", x);
  x = b.conv("conv5b", x, 512, k333, {1, 1, 1}, same);
  x = b.activation("relu5b", x);
  x = b.pool("pool5", x, OpType::Max, {2, 2, 2}, {2, 2, 2}, spatial_pad(1));
  x = b.flatten("flatten", x);
  x = b.fully_connected("fc6", x, 4096);
  x = b.activation("relu6", x);
  x = b.fully_connected("fc7", x, 4096);
  x = b.activation("relu7", x);
  b.fully_connected("fc8", x, classes);
  return b.build();
}

ModelGraph r2plus1d_18(std::int64_t classes) {
  ModelBuilder b("r2plus1d_18", TensorShape{112, 112, 16, 3});
  // Mid-plane counts keep the (2+1)D factorization parameter-equivalent to the full 3D kernel.
  const std::int64_t stem_t = 7;
  const std::int64_t stem_mid = (3 * 64 * stem_t * 7 * 7) / (3 * 7 * 7 + stem_t * 64);
  std::string x = b.conv("conv1_s", "", stem_mid, {1, 7, 7}, {1, 2, 2}, spatial_pad(3));
  x = b.activation("relu1_s", x);
  x = b.conv("conv1_t", x, 64, {stem_t, 1, 1}, {1, 1, 1}, temporal_pad(stem_t / 2));
  x = b.activation("relu1_t", x);
  x = b.pool("maxpool", x, OpType::Max, k333, {2, 2, 2}, same_padding(k333));

  std::int64_t in_planes = 64;
  const Stage stages[] = {{64, 1}, {128, 2}, {256, 2}, {512, 2}};
  int stage_no = 1;
  for (const Stage& st : stages) {
    for (int block = 0; block < 2; ++block) {
      const std::int64_t stride = block == 0 ? st.stride : 1;
      const std::string p = "layer" + std::to_string(stage_no) + "_" + std::to_string(block) + "_";
      const std::int64_t mid1 = (in_planes * st.planes * 27) / (in_planes * 9 + 3 * st.planes);
      const std::int64_t mid2 = (st.planes * st.planes * 27) / (st.planes * 9 + 3 * st.planes);
      const std::string block_in = x;
      std::string y = b.conv(p + "conv1_s", block_in, mid1, k133, {1, stride, stride}, spatial_pad(1));
      y = b.activation(p + "relu1_s", y);
      y = b.conv(p + "conv1_t", y, st.planes, k311, {stride, 1, 1}, temporal_pad(1));
      y = b.activation(p + "relu1_t", y);
      y = b.conv(p + "conv2_s", y, mid2, k133, {1, 1, 1}, spatial_pad(1));
      y = b.activation(p + "relu2_s", y);
      y = b.conv(p + "conv2_t", y, st.planes, k311, {1, 1, 1}, temporal_pad(1));
      std::string shortcut = block_in;
      if (stride != 1 || in_planes != st.planes) {
        shortcut = b.conv(p + "downsample", block_in, st.planes, k111, {stride, stride, stride});
      }
      y = b.elementwise(p + "add", y, shortcut, OpType::Add);
      x = b.activation(p + "relu", y);
      in_planes = st.planes;
    }
    ++stage_no;
  }
  x = b.global_avg_pool("avgpool", x);
  b.fully_connected("fc", x, classes);
  return b.build();
}

ModelGraph toy() {
  ModelBuilder b("toy", TensorShape{8, 8, 4, 3});
  std::string x = b.conv("conv1", "", 8, k333, {1, 1, 1}, same_padding(k333));
  x = b.activation("relu1", x);
  x = b.pool("pool1", x, OpType::Max, {1, 2, 2}, {1, 2, 2});
  x = b.conv("conv2", x, 16, k333, {1, 1, 1}, same_padding(k333));
  x = b.activation("relu2", x);
  x = b.global_avg_pool("gap", x);
  b.fully_connected("fc", x, 10);
  return b.build();
}

ModelGraph multi_shape() {
  ModelBuilder b("multi_shape", TensorShape{56, 56, 16, 3});
  std::string x = b.conv("conv_a", "", 32, k333, {1, 1, 1}, same_padding(k333));
  x = b.activation("relu_a", x);
  x = b.pool("pool_a", x, OpType::Max, {1, 2, 2}, {1, 2, 2});
  x = b.conv("conv_b", x, 64, k133, {2, 1, 1}, spatial_pad(1));
  x = b.activation("relu_b", x);
  x = b.conv("conv_c", x, 64, k311, {1, 1, 1}, temporal_pad(1));
  x = b.activation("relu_c", x);
  x = b.pool("pool_b", x, OpType::Max, {2, 2, 2}, {2, 2, 2});
  x = b.conv("conv_d", x, 128, k333, {1, 1, 1}, same_padding(k333));
  const std::string skip = b.activation("relu_d", x);
  x = b.conv("conv_e", skip, 128, k111);
  x = b.activation("relu_e", x, OpType::Swish);
  x = b.conv("conv_f", x, 128, k333, {1, 1, 1}, same_padding(k333));
  x = b.activation("relu_f", x);
  x = b.elementwise("add", x, skip);
  x = b.pool("pool_c", x, OpType::Avg, {2, 2, 2}, {2, 2, 2});
  x = b.conv("conv_g", x, 256, k333, {1, 1, 1}, same_padding(k333));
  x = b.activation("relu_g", x);
  x = b.conv("conv_h", x, 256, k133, {1, 1, 1}, spatial_pad(1));
  x = b.activation("relu_h", x);
  x = b.global_avg_pool("gap", x);
  b.fully_connected("fc", x, 10);
  return b.build();
}

std::vector<std::string> names() { return {"c3d", "r2plus1d_18", "toy", "multi_shape"}; }

ModelGraph by_name(std::string_view name) {
  if (name == "c3d") return c3d();
  if (name == "r2plus1d_18") return r2plus1d_18();
  if (name == "toy") return toy();
  if (name == "multi_shape") return multi_shape();
  throw std::invalid_argument("unknown bundled model '" + std::string(name) + "'");
}

}  // namespace flow3d::zoo
