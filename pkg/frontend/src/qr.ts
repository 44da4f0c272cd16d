import qrcode from "qrcode";

/** Render the provisioning payload string into an inline SVG.
 *
 * The matrix comes from the qrcode library; only the SVG markup is built
 * here so the output is deterministic and easy to test. Error correction
 * level M matches typical phone-camera scanning of on-screen codes.
 */

export interface QrMatrix {
  size: number;
  /** Row-major module bits, true = dark. */
  get(row: number, col: number): boolean;
}

export function encodeMatrix(payload: string): QrMatrix {
  const code = qrcode.create(payload, { errorCorrectionLevel: "M" });
  const size = code.modules.size;
  const data = code.modules.data;
  return {
    size,
    get: (row, col) => Boolean(data[row * size + col]),
  };
}

export function matrixToSvg(matrix: QrMatrix, quietZone = 4): string {
  const size = matrix.size + 2 * quietZone;
  const rects: string[] = [];
  for (let row = 0; row < matrix.size; row += 1) {
    for (let col = 0; col < matrix.size; col += 1) {
      if (matrix.get(row, col)) {
        rects.push(`<rect x="${col + quietZone}" y="${row + quietZone}" width="1" height="1"/>`);
      }
    }
  }
  return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size} ${size}" ` +
    `shape-rendering="crispEdges" role="img" aria-label="provisioning QR code">` +
    `<rect width="${size}" height="${size}" fill="#fff"/>` +
    `<g fill="#000">${rects.join("")}</g></svg>`;
}

export function payloadToSvg(payload: string): string {
  return matrixToSvg(encodeMatrix(payload));
}
