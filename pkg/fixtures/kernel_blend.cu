// Forward alpha blending over depth-sorted splats, one thread block per
// 16x16 tile, one thread per pixel. The block's splat list arrives sorted
// front to back; each thread walks it sequentially and composites into its
// own pixel until the transmittance cutoff fires.

#include <cuda_runtime.h>

#define TILE_X 16
#define TILE_Y 16
#define ALPHA_MAX 0.99f
#define ALPHA_MIN (1.0f / 255.0f)
#define T_STOP 1e-4f

struct Splat {
    float2 xy;              // projected center, pixel units
    float4 conic_opacity;   // inverse covariance (a, b, c) and opacity
    float3 color;
};

__global__ void blend_tiles(
    const int2*  __restrict__ ranges,      // per-tile [begin, end) into point_list
    const int*   __restrict__ point_list,  // depth-sorted splat ids, grouped by tile
    const Splat* __restrict__ splats,
    int width, int height,
    const float3 background,
    float3* __restrict__ out_color,
    float*  __restrict__ out_final_T,
    int*    __restrict__ out_n_contrib)
{
    const int tile = blockIdx.y * gridDim.x + blockIdx.x;
    const int px = blockIdx.x * TILE_X + threadIdx.x;
    const int py = blockIdx.y * TILE_Y + threadIdx.y;
    const bool inside = px < width && py < height;
    const float2 pixel = make_float2(px + 0.5f, py + 0.5f);

    const int2 range = ranges[tile];

    // EVOLVE-BLOCK-START
    float T = 1.0f;
    float3 acc = make_float3(0.0f, 0.0f, 0.0f);
    int n_contrib = 0;
    bool done = !inside;

    for (int i = range.x; i < range.y && !done; ++i) {
        const Splat s = splats[point_list[i]];
        const float2 d = make_float2(s.xy.x - pixel.x, s.xy.y - pixel.y);
        const float power = -0.5f * (s.conic_opacity.x * d.x * d.x +
                                     s.conic_opacity.z * d.y * d.y)
                            - s.conic_opacity.y * d.x * d.y;
        if (power > 0.0f)
            continue;

        const float alpha = fminf(ALPHA_MAX, s.conic_opacity.w * __expf(power));
        if (alpha < ALPHA_MIN)
            continue;

        const float test_T = T * (1.0f - alpha);
        if (test_T < T_STOP) {
            done = true;
            continue;
        }

        acc.x += s.color.x * alpha * T;
        acc.y += s.color.y * alpha * T;
        acc.z += s.color.z * alpha * T;
        T = test_T;
        ++n_contrib;
    }
    // EVOLVE-BLOCK-END

    if (inside) {
        const int pix = py * width + px;
        out_color[pix] = make_float3(acc.x + T * background.x,
                                     acc.y + T * background.y,
                                     acc.z + T * background.z);
        out_final_T[pix] = T;
        out_n_contrib[pix] = n_contrib;
    }
}
