import { ApiClient, AreaCell, BoundingBox } from "../api.js";

/** Parse the four bbox fields; null means invalid input (no request made). */
export function parseBbox(
  minLat: string, minLon: string, maxLat: string, maxLon: string,
): BoundingBox | null {
  const values = [minLat, minLon, maxLat, maxLon].map((raw) => Number(raw.trim()));
  if (values.some((v) => !Number.isFinite(v))) {
    return null;
  }
  const [a, b, c, d] = values as [number, number, number, number];
  if (a > c || b > d || a < -90 || c > 90 || b < -180 || d > 180) {
    return null;
  }
  return { minLat: a, minLon: b, maxLat: c, maxLon: d };
}

function renderGrid(grid: HTMLElement, cells: AreaCell[]): void {
  if (cells.length === 0) {
    grid.innerHTML = `<p data-state="empty">No reported cases in this area.</p>`;
    return;
  }
  const latIndex = (c: AreaCell) => Math.round(c.min_lat / c.size_deg);
  const lonIndex = (c: AreaCell) => Math.round(c.min_lon / c.size_deg);
  const minRow = Math.min(...cells.map(latIndex));
  const maxRow = Math.max(...cells.map(latIndex));
  const minCol = Math.min(...cells.map(lonIndex));
  const peak = Math.max(...cells.map((c) => c.positive_count));
  const rows = maxRow - minRow + 1;

  grid.innerHTML = "";
  grid.dataset.state = "cells";
  const table = document.createElement("div");
  table.className = "cell-grid";
  for (const cell of cells) {
    const tile = document.createElement("div");
    tile.className = "cell";
    // rows flipped so north is up
    tile.style.gridRow = String(rows - (latIndex(cell) - minRow));
    tile.style.gridColumn = String(lonIndex(cell) - minCol + 1);
    tile.style.background = `rgba(200, 40, 40, ${0.25 + 0.75 * (cell.positive_count / peak)})`;
    tile.dataset.cell = cell.cell;
    tile.dataset.count = String(cell.positive_count);
    tile.title = `${cell.positive_count} reported around ${cell.min_lat.toFixed(2)}, ${cell.min_lon.toFixed(2)}`;
    tile.textContent = String(cell.positive_count);
    table.appendChild(tile);
  }
  grid.appendChild(table);
}

export function renderAreaSearch(container: HTMLElement, api: ApiClient): void {
  container.innerHTML = `
    <section class="card" data-view="area">
      <h2>Cases near a location</h2>
      <p>Counts are aggregated over 0.01° grid cells; no registration needed.</p>
      <form id="area-form">
        <label>South latitude <input id="bbox-min-lat" value="23.70"></label>
        <label>West longitude <input id="bbox-min-lon" value="90.35"></label>
        <label>North latitude <input id="bbox-max-lat" value="23.90"></label>
        <label>East longitude <input id="bbox-max-lon" value="90.45"></label>
        <p class="error" id="area-error" hidden></p>
        <button type="submit">Search</button>
      </form>
      <div id="area-grid" data-state="idle"></div>
    </section>
  `;
  const form = container.querySelector<HTMLFormElement>("#area-form")!;
  const error = container.querySelector<HTMLParagraphElement>("#area-error")!;
  const grid = container.querySelector<HTMLDivElement>("#area-grid")!;
  const field = (id: string) => container.querySelector<HTMLInputElement>(id)!.value;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const bbox = parseBbox(
      field("#bbox-min-lat"), field("#bbox-min-lon"),
      field("#bbox-max-lat"), field("#bbox-max-lon"),
    );
    if (bbox === null) {
      error.textContent = "Enter a valid box: south ≤ north, west ≤ east.";
      error.hidden = false;
      grid.dataset.state = "idle";
      return;
    }
    error.hidden = true;
    grid.dataset.state = "loading";
    api
      .areas(bbox)
      .then((cells) => renderGrid(grid, cells))
      .catch(() => {
        grid.dataset.state = "error";
        grid.innerHTML = `<p data-state="error">Service unavailable.
          <a href="#/area">Retry</a></p>`;
      });
  });
}
