/** three.js scene for one phantom: per-structure meshes with visibility
 * toggles, orbit/zoom, camera preserved across toggles. */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { structureColorHex } from "./colors";
import { parsePly } from "./ply";
import { Manifest, PhantomApi } from "./types";

export class PhantomViewer {
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private controls: OrbitControls;
  private meshes = new Map<number, THREE.Mesh>();
  unavailable = new Set<number>();

  constructor(
    private api: PhantomApi,
    canvas: HTMLCanvasElement,
  ) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.1, 5000);
    this.camera.position.set(250, 180, 250);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.enableDamping = true;
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.4);
    key.position.set(1, 2, 1.5);
    this.scene.add(key);
    const animate = () => {
      requestAnimationFrame(animate);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  /** Load every meshed structure of the phantom; returns the ids loaded. */
  async loadPhantom(manifest: Manifest): Promise<number[]> {
    this.clear();
    const meshed = manifest.structures.filter((s) => s.mesh_path);
    const loaded: number[] = [];
    await Promise.all(
      meshed.map(async (s) => {
        try {
          const res = await fetch(this.api.meshUrl(manifest.phantom_id, s.id));
          if (!res.ok) throw new Error(`${res.status}`);
          const parsed = parsePly(await res.arrayBuffer());
          const geometry = new THREE.BufferGeometry();
          geometry.setAttribute("position", new THREE.BufferAttribute(parsed.positions, 3));
          geometry.setIndex(new THREE.BufferAttribute(parsed.indices, 1));
          geometry.computeVertexNormals();
          const material = new THREE.MeshLambertMaterial({
            color: structureColorHex(s.id),
          });
          const mesh = new THREE.Mesh(geometry, material);
          mesh.name = String(s.id);
          this.meshes.set(s.id, mesh);
          this.scene.add(mesh);
          loaded.push(s.id);
        } catch {
          this.unavailable.add(s.id); // fetch/parse failure: mark, keep going
        }
      }),
    );
    this.frameContents();
    return loaded.sort((a, b) => a - b);
  }

  /** Toggle one structure; the camera is left untouched. */
  setVisible(structureId: number, visible: boolean): void {
    const mesh = this.meshes.get(structureId);
    if (mesh) mesh.visible = visible;
  }

  visibleIds(): number[] {
    return [...this.meshes.entries()]
      .filter(([, m]) => m.visible)
      .map(([sid]) => sid)
      .sort((a, b) => a - b);
  }

  private frameContents(): void {
    const box = new THREE.Box3();
    for (const mesh of this.meshes.values()) box.expandByObject(mesh);
    if (box.isEmpty()) return;
    const center = box.getCenter(new THREE.Vector3());
    const size = box.getSize(new THREE.Vector3()).length();
    this.controls.target.copy(center);
    this.camera.position.copy(center).add(new THREE.Vector3(size, size * 0.7, size));
    this.camera.near = size / 100;
    this.camera.far = size * 10;
    this.camera.updateProjectionMatrix();
  }

  clear(): void {
    for (const mesh of this.meshes.values()) {
      this.scene.remove(mesh);
      mesh.geometry.dispose();
      (mesh.material as THREE.Material).dispose();
    }
    this.meshes.clear();
    this.unavailable.clear();
  }
}
