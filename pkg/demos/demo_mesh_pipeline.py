"""Voxel mask -> watertight surface -> smoothing -> export -> back to voxels.

Uses a digitized sphere so every step has an analytic target.
"""

import numpy as np

from phantomforge.grid import VoxelGrid
from phantomforge.mesh_io import export_mesh
from phantomforge.meshing import (check_watertight, euler_characteristic,
                                  laplacian_smooth, marching_cubes,
                                  mesh_surface_area, mesh_volume)
from phantomforge.volumetry import dice
from phantomforge.voxelize import GridTemplate, voxelize_mesh

# digitized sphere, radius 20 voxels at 1 mm
n, r = 45, 20
c = (n - 1) / 2
x, y, z = np.meshgrid(*(np.arange(n),) * 3, indexing="ij")
inside = ((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 <= r * r).astype(np.uint16)
mask = VoxelGrid((n, n, n), (1, 1, 1), (0, 0, 0), inside.T.reshape(-1).copy())

mesh = marching_cubes(mask)
analytic = 4 / 3 * np.pi * r**3
print(f"marching cubes: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
print(f"  volume  {mesh_volume(mesh):9.1f} mm^3 (analytic {analytic:.1f}, "
      f"{(mesh_volume(mesh) / analytic - 1) * 100:+.2f}%)")
print(f"  area    {mesh_surface_area(mesh):9.1f} mm^2 (analytic {4 * np.pi * r * r:.1f})")
print(f"  watertight={check_watertight(mesh).watertight}, "
      f"euler={euler_characteristic(mesh)}")

smoothed = laplacian_smooth(mesh, lam=0.5, iterations=20)
print(f"\nafter smoothing (lambda=0.5, 20 iterations): "
      f"volume {mesh_volume(smoothed):.1f} mm^3 "
      f"(shrinkage {(1 - mesh_volume(smoothed) / mesh_volume(mesh)) * 100:.2f}%)")

for name in ("sphere.ply", "sphere.obj", "sphere.stl"):
    export_mesh(smoothed, f"/tmp/{name}")
print("exported /tmp/sphere.{ply,obj,stl}")

back = voxelize_mesh(mesh, GridTemplate.like(mask))
print(f"\nvoxelize(marching_cubes(mask)) vs mask: dice = {dice(mask, back):.4f}")
