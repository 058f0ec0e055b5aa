import { wireApp } from "./app.js";

window.addEventListener("DOMContentLoaded", () => {
  const params = new URLSearchParams(window.location.search);
  const n = Number(params.get("grid") ?? "128");
  void wireApp(document, { grid: [n, n] });
});
