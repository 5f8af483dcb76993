/** Parser for the catalog's PLY files: binary little-endian 1.0,
 * three float32 vertex properties, uchar-counted int32 triangle lists. */

export interface ParsedMesh {
  positions: Float32Array; // 3 per vertex
  indices: Uint32Array; // 3 per triangle
}

const HEADER_END = "end_header\n";

export function parsePly(buffer: ArrayBuffer): ParsedMesh {
  const bytes = new Uint8Array(buffer);
  const probeLen = Math.min(bytes.length, 4096);
  let headerText = "";
  for (let i = 0; i < probeLen; i++) headerText += String.fromCharCode(bytes[i]);
  const end = headerText.indexOf(HEADER_END);
  if (!headerText.startsWith("ply") || end < 0) {
    throw new Error("not a PLY file");
  }
  const header = headerText.slice(0, end);
  if (!header.includes("format binary_little_endian 1.0")) {
    throw new Error("only binary little-endian PLY is supported");
  }
  let nVertices = -1;
  let nFaces = -1;
  for (const line of header.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "element" && parts[1] === "vertex") nVertices = Number(parts[2]);
    if (parts[0] === "element" && parts[1] === "face") nFaces = Number(parts[2]);
  }
  if (nVertices < 0 || nFaces < 0) throw new Error("PLY header missing elements");

  let offset = end + HEADER_END.length;
  const view = new DataView(buffer);
  const positions = new Float32Array(nVertices * 3);
  for (let i = 0; i < nVertices * 3; i++) {
    positions[i] = view.getFloat32(offset, true);
    offset += 4;
  }
  const indices = new Uint32Array(nFaces * 3);
  for (let f = 0; f < nFaces; f++) {
    const count = view.getUint8(offset);
    offset += 1;
    if (count !== 3) throw new Error(`non-triangular face (${count} vertices)`);
    for (let k = 0; k < 3; k++) {
      indices[f * 3 + k] = view.getInt32(offset, true);
      offset += 4;
    }
  }
  return { positions, indices };
}
