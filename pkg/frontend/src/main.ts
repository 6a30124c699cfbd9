import { start } from "./app.js";

start().catch((err) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `Cannot reach the fieldlog service: ${err}`;
    (banner as HTMLElement).style.display = "block";
  }
});
