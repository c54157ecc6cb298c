import { App } from "./app.js";

const app = new App(document, "");
void app.start();

declare global {
  interface Window {
    attrsliceApp: App;
  }
}
window.attrsliceApp = app;
